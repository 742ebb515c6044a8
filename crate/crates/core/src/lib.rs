pub mod channel;
pub mod cotag;
pub mod gf;
pub mod harness;
pub mod rlnc;
pub mod simcore;
pub mod transport;
