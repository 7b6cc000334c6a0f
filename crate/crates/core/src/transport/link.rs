use alloc::collections::VecDeque;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::wire::{decode, encode};
use crate::error::{Error, Result};
use crate::protocol::ProtocolMessage;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Client → server.
    Uplink,
    /// Server → client.
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TapFilter {
    Uplink,
    Downlink,
    Both,
}

impl TapFilter {
    fn matches(self, d: Direction) -> bool {
        matches!((self, d), (TapFilter::Both, _) | (TapFilter::Uplink, Direction::Uplink) | (TapFilter::Downlink, Direction::Downlink))
    }
}

/// One captured frame. `timestamp` is a logical clock shared by all links
/// the tap is attached to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapRecord {
    pub timestamp: u64,
    pub direction: Direction,
    pub frame: Vec<u8>,
}

#[derive(Debug, Default)]
struct TapLog {
    clock: u64,
    records: Vec<TapRecord>,
}

/// Passive recorder of frames crossing one or more links.
///
/// Clones share the same log, so a tap handed to several links yields a
/// single capture-ordered transcript.
#[derive(Debug, Clone)]
pub struct EavesdropTap {
    filter: TapFilter,
    log: Rc<RefCell<TapLog>>,
}

impl EavesdropTap {
    pub fn new(filter: TapFilter) -> Self {
        EavesdropTap { filter, log: Rc::new(RefCell::new(TapLog::default())) }
    }

    pub fn filter(&self) -> TapFilter {
        self.filter
    }

    fn observe(&self, direction: Direction, frame: &[u8]) {
        let mut log = self.log.borrow_mut();
        log.clock += 1;
        if self.filter.matches(direction) {
            let timestamp = log.clock;
            log.records.push(TapRecord { timestamp, direction, frame: frame.to_vec() });
        }
    }

    pub fn records(&self) -> Vec<TapRecord> {
        self.log.borrow().records.clone()
    }

    /// Captured frames in capture order.
    pub fn frames(&self) -> Vec<Vec<u8>> {
        self.log.borrow().records.iter().map(|r| r.frame.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.log.borrow().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
struct Channel {
    queue: VecDeque<Vec<u8>>,
    last_seq: Option<u64>,
}

#[derive(Debug)]
struct Shared {
    up: Channel,
    down: Channel,
    closed: bool,
    taps: Vec<EavesdropTap>,
}

impl Shared {
    fn send(&mut self, direction: Direction, frame: Vec<u8>) -> Result<()> {
        if self.closed {
            return Err(Error::Link("send on a closed link".into()));
        }
        for tap in &self.taps {
            tap.observe(direction, &frame);
        }
        match direction {
            Direction::Uplink => self.up.queue.push_back(frame),
            Direction::Downlink => self.down.queue.push_back(frame),
        }
        Ok(())
    }

    fn recv<T: Scalar>(&mut self, direction: Direction) -> Result<Option<ProtocolMessage<T>>> {
        let ch = match direction {
            Direction::Uplink => &mut self.up,
            Direction::Downlink => &mut self.down,
        };
        let Some(frame) = ch.queue.pop_front() else {
            return Ok(None);
        };
        let msg = decode::<T>(&frame)?;
        if let Some(last) = ch.last_seq {
            if msg.seq <= last {
                return Err(Error::Protocol(format!("sequence number {} after {last} on {direction:?}", msg.seq)));
            }
        }
        ch.last_seq = Some(msg.seq);
        Ok(Some(msg))
    }
}

/// Sending and receiving half of a link.
pub trait Endpoint {
    fn send<T: Scalar>(&mut self, msg: &ProtocolMessage<T>) -> Result<()>;
    /// Next message in FIFO order, or `None` when nothing is queued.
    fn recv<T: Scalar>(&mut self) -> Result<Option<ProtocolMessage<T>>>;
    fn close(&mut self);
}

/// Server side of an in-process link.
#[derive(Debug)]
pub struct ServerEndpoint {
    shared: Rc<RefCell<Shared>>,
}

/// Client side of an in-process link.
#[derive(Debug)]
pub struct ClientEndpoint {
    shared: Rc<RefCell<Shared>>,
}

impl Endpoint for ServerEndpoint {
    fn send<T: Scalar>(&mut self, msg: &ProtocolMessage<T>) -> Result<()> {
        self.shared.borrow_mut().send(Direction::Downlink, encode(msg))
    }

    fn recv<T: Scalar>(&mut self) -> Result<Option<ProtocolMessage<T>>> {
        self.shared.borrow_mut().recv(Direction::Uplink)
    }

    fn close(&mut self) {
        self.shared.borrow_mut().closed = true;
    }
}

impl Endpoint for ClientEndpoint {
    fn send<T: Scalar>(&mut self, msg: &ProtocolMessage<T>) -> Result<()> {
        self.shared.borrow_mut().send(Direction::Uplink, encode(msg))
    }

    fn recv<T: Scalar>(&mut self) -> Result<Option<ProtocolMessage<T>>> {
        self.shared.borrow_mut().recv(Direction::Downlink)
    }

    fn close(&mut self) {
        self.shared.borrow_mut().closed = true;
    }
}

/// Connects a server and a client endpoint. Every frame is copied to the
/// matching taps before it is queued for delivery.
pub fn in_process_link(taps: &[EavesdropTap]) -> (ServerEndpoint, ClientEndpoint) {
    let shared = Rc::new(RefCell::new(Shared {
        up: Channel::default(),
        down: Channel::default(),
        closed: false,
        taps: taps.to_vec(),
    }));
    (ServerEndpoint { shared: shared.clone() }, ClientEndpoint { shared })
}
