//! Event-file ingestion, rasterization and synthetic datasets.

mod csv;
mod manifest;
mod nmnist;
mod raster;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use self::csv::{read_event_csv, write_event_csv, CSV_HEADER};
pub use self::manifest::{
    read_events, CropMode, CropSpec, Dataset, DatasetManifest, EventFormat, EventSample,
    ManifestEntry,
};
pub use self::nmnist::{read_nmnist_bin, write_nmnist_bin, NMNIST_SIZE};
pub use self::raster::{rasterize, rasterize_window};
pub use self::synthetic::{gen_synthetic, raster_to_events, SyntheticDataset, SyntheticParams};

use crate::tensor::SpikeTensor;

/// One address event. Audio-style data uses `y = 0` and `x = channel`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub t_us: u64,
    pub x: u32,
    pub y: u32,
    pub p: u32,
}

/// Sensor geometry; rasterized units are laid out `[polarities, height, width]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDims {
    pub width: u32,
    pub height: u32,
    pub polarities: u32,
}

impl SensorDims {
    pub fn units(&self) -> usize {
        (self.width * self.height * self.polarities) as usize
    }

    pub fn shape(&self) -> [usize; 3] {
        [
            self.polarities as usize,
            self.height as usize,
            self.width as usize,
        ]
    }

    pub fn contains(&self, ev: &EventRecord) -> bool {
        ev.x < self.width && ev.y < self.height && ev.p < self.polarities
    }

    pub fn index(&self, ev: &EventRecord) -> usize {
        ((ev.p * self.height + ev.y) * self.width + ev.x) as usize
    }
}

/// A rasterized sample with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeled {
    pub spikes: SpikeTensor,
    pub label: usize,
}
