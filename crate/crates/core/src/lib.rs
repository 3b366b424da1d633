pub mod coretypes;
pub mod freqsec;
pub mod scenario;
pub mod ucmodel;
pub mod ingest;
pub mod experiments;
