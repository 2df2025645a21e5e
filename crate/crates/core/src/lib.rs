//! Gate-level netlist reverse-engineering workbench.
//!
//! The crate is organised bottom-up: [`model`] holds the netlist and the
//! evented project, [`formats`] reads and writes it, [`logic`] recovers
//! Boolean functions, [`graph`], [`fsm`], [`sim`] and [`aes`] implement the
//! analyses, [`trace`] records and replays sessions, and [`workbench`] ties
//! everything into generators and a command channel.

pub mod aes;
pub mod formats;
pub mod fsm;
pub mod graph;
pub mod logic;
pub mod model;
pub mod sim;
pub mod trace;
pub mod workbench;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Format(#[from] formats::FormatError),
    #[error(transparent)]
    Logic(#[from] logic::LogicError),
    #[error(transparent)]
    Fsm(#[from] fsm::FsmError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Aes(#[from] aes::AesError),
    #[error(transparent)]
    Trace(#[from] trace::TraceError),
    #[error(transparent)]
    Workbench(#[from] workbench::WorkbenchError),
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Model(e) => e.code(),
            Error::Format(e) => e.code(),
            Error::Logic(e) => e.code(),
            Error::Fsm(e) => e.code(),
            Error::Sim(e) => e.code(),
            Error::Aes(e) => e.code(),
            Error::Trace(e) => e.code(),
            Error::Workbench(e) => e.code(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
