use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integrability violation: {factor} is not integrable ({detail})")]
    Integrability { factor: &'static str, detail: String },
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("domination failure at t={t}: no finite intensity bound")]
    Domination { t: f64 },
    #[error("band violation at t={t}: lower {lower} exceeds upper {upper}")]
    Band { t: f64, lower: f64, upper: f64 },
    #[error("supercritical branching: mean offspring {m} >= 1")]
    Supercritical { m: f64 },
    #[error("{what} cap {cap} exceeded{detail}")]
    Cap { what: &'static str, cap: u64, detail: String },
    #[error("unbounded rectangle requested: mark bound must be finite")]
    UnboundedMark,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Invalid { what, detail: detail.into() }
}
