use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Server,
    Attacker,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Server => "server",
            Role::Attacker => "attacker",
        }
    }
}

/// One row of the metric CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub experiment_id: String,
    pub round: u32,
    pub user: u32,
    pub role: Role,
    pub is: Option<f64>,
    pub fid: Option<f64>,
    pub ssim: Option<f64>,
    pub mean_gap: Option<f64>,
    pub std_gap: Option<f64>,
}

pub const CSV_HEADER: &str = "experiment_id,round,user,role,is,fid,ssim,mean_gap,std_gap";

impl MetricReport {
    pub fn new(experiment_id: &str, round: u32, user: u32, role: Role) -> Self {
        MetricReport { experiment_id: experiment_id.into(), round, user, role, is: None, fid: None, ssim: None, mean_gap: None, std_gap: None }
    }

    /// Checks IS ≥ 1, FID ≥ 0 and SSIM ∈ [-1, 1], with a little slack for rounding.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        if self.is.is_some_and(|v| !(v >= 1.0 - tol)) {
            return Err(Error::Numerical(format!("IS {} below 1", self.is.unwrap())));
        }
        if self.fid.is_some_and(|v| !(v >= 0.0)) {
            return Err(Error::Numerical(format!("FID {} negative", self.fid.unwrap())));
        }
        if self.ssim.is_some_and(|v| !(-1.0 - tol..=1.0 + tol).contains(&v)) {
            return Err(Error::Numerical(format!("SSIM {} outside [-1, 1]", self.ssim.unwrap())));
        }
        Ok(())
    }

    /// CSV row matching [`CSV_HEADER`]; absent metrics are empty fields.
    pub fn to_csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment_id,
            self.round,
            self.user,
            self.role.as_str(),
            f(self.is),
            f(self.fid),
            f(self.ssim),
            f(self.mean_gap),
            f(self.std_gap)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_fields_for_missing_metrics() {
        let mut r = MetricReport::new("toy", 3, 1, Role::Attacker);
        r.is = Some(1.5);
        assert_eq!(r.to_csv_row(), "toy,3,1,attacker,1.5,,,,");
        assert!(r.validate().is_ok());
        r.ssim = Some(1.5);
        assert!(r.validate().is_err());
    }
}
