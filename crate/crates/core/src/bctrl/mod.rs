pub mod algo;
pub mod patches;
pub mod state;
pub mod update;

pub use algo::{evaluate, Branches, CellReadings};
pub use patches::{Capability, DdtTrips, Manifest, PatchSet, Payload, ScvSpoof};
pub use state::{BctrlState, CapabilityMissing, TickReport, UnlockResult};
pub use update::{chunk_image, FwUpdateSession, UpdateState, UpdateStep, CHUNK_LEN};
