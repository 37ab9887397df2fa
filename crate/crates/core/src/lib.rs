pub mod numkernel;
pub mod states;
pub mod channels;
pub mod decomposition;
pub mod optics;
pub mod experiment;
