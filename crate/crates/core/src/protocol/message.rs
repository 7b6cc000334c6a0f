use crate::params::ParameterVector;

/// Payload of one protocol hop.
#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody<T> {
    /// Server → client: current discriminator weights.
    DiscriminatorDown { weights: ParameterVector<T> },
    /// Client → server: gradient of the real-data loss and the loss itself.
    ClientUpdateUp { gradient: ParameterVector<T>, loss: f64 },
    /// Server → client: end of a round with the generator's IS.
    RoundComplete { inception_score: f64 },
}

/// One message with its routing header and per-link sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage<T> {
    pub user: u32,
    pub round: u32,
    pub step: u32,
    pub seq: u64,
    pub body: MessageBody<T>,
}

impl<T> ProtocolMessage<T> {
    pub fn is_uplink(&self) -> bool {
        matches!(self.body, MessageBody::ClientUpdateUp { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            MessageBody::DiscriminatorDown { .. } => "DiscriminatorDown",
            MessageBody::ClientUpdateUp { .. } => "ClientUpdateUp",
            MessageBody::RoundComplete { .. } => "RoundComplete",
        }
    }
}
