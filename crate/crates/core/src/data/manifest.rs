//! Dataset manifests: a JSON list of `{path, label}` pairs plus sensor metadata.
//! Relative sample paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rasterize_window, read_event_csv, read_nmnist_bin, EventRecord, Labeled, SensorDims};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFormat {
    Csv,
    Nmnist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    First,
    Random,
}

/// Presents only `length_ms` of each record, either from its start or from a
/// uniformly drawn offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSpec {
    pub mode: CropMode,
    pub length_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: EventFormat,
    pub sensor: SensorDims,
    pub num_classes: usize,
    /// Events at or after this time are dropped.
    pub duration_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropSpec>,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidParam("num_classes must be >= 1".into()));
        }
        if self.sensor.units() == 0 {
            return Err(Error::InvalidParam("sensor dimensions must be >= 1".into()));
        }
        if !(self.duration_ms > 0.0 && self.duration_ms.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "duration_ms must be positive, got {}",
                self.duration_ms
            )));
        }
        if let Some(crop) = self.crop {
            if !(crop.length_ms > 0.0 && crop.length_ms <= self.duration_ms) {
                return Err(Error::InvalidParam(format!(
                    "crop length {} ms must be in (0, duration_ms]",
                    crop.length_ms
                )));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.label >= self.num_classes {
                return Err(Error::OutOfRange(format!(
                    "sample {i} ({}): label {} not below num_classes {}",
                    s.path.display(),
                    s.label,
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Length of the presented window in ms.
    pub fn window_ms(&self) -> f64 {
        self.crop.map_or(self.duration_ms, |c| c.length_ms)
    }

    pub fn grid(&self, dt: f64) -> Result<TimeGrid> {
        TimeGrid::from_duration(dt, self.window_ms())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventSample {
    pub events: Vec<EventRecord>,
    pub label: usize,
    pub path: PathBuf,
}

/// Event data of every manifest entry, held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<EventSample>,
}

impl Dataset {
    /// Reads the manifest and all listed files. An empty sample list is an error.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        if manifest.samples.is_empty() {
            return Err(Error::Format(format!(
                "manifest {} lists no samples",
                manifest_path.display()
            )));
        }
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let samples = manifest
            .samples
            .par_iter()
            .map(|entry| {
                let path = base.join(&entry.path);
                let events = read_events(&path, manifest.format)?;
                if let Some(ev) = events.iter().find(|e| !manifest.sensor.contains(e)) {
                    return Err(Error::OutOfRange(format!(
                        "{}: event ({}, {}, p={}) outside the declared sensor",
                        path.display(),
                        ev.x,
                        ev.y,
                        ev.p
                    )));
                }
                Ok(EventSample {
                    events,
                    label: entry.label,
                    path,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Rasterizes every sample. Random crops draw their offsets from `rng` in
    /// sample order; without one they fall back to the record start.
    pub fn materialize(&self, grid: &TimeGrid, mut rng: Option<&mut Rng>) -> Result<Vec<Labeled>> {
        let m = &self.manifest;
        let window = m.window_ms();
        let random = matches!(
            m.crop,
            Some(CropSpec {
                mode: CropMode::Random,
                ..
            })
        );
        let starts: Vec<u64> = self
            .samples
            .iter()
            .map(|s| match (&mut rng, random) {
                (Some(rng), true) => {
                    let max = latest_start(&s.events, m.duration_ms, window);
                    rng.gen_range(0..=max)
                }
                _ => 0,
            })
            .collect();
        self.samples
            .par_iter()
            .zip(starts.par_iter())
            .map(|(s, &start)| {
                let remaining = m.duration_ms - start as f64 / 1000.0;
                let spikes =
                    rasterize_window(&s.events, grid, &m.sensor, start, window.min(remaining))?;
                Ok(Labeled {
                    spikes,
                    label: s.label,
                })
            })
            .collect()
    }
}

fn latest_start(events: &[EventRecord], duration_ms: f64, window_ms: f64) -> u64 {
    let cap_us = (duration_ms * 1000.0) as u64;
    let end = events
        .iter()
        .map(|e| e.t_us + 1)
        .filter(|&t| t <= cap_us)
        .max()
        .unwrap_or(0);
    end.saturating_sub((window_ms * 1000.0) as u64)
}

pub fn read_events(path: &Path, format: EventFormat) -> Result<Vec<EventRecord>> {
    let annotate = |e: Error| match e {
        Error::Parse { line, msg } => Error::Format(format!("{}:{line}: {msg}", path.display())),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    };
    match format {
        EventFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            read_event_csv(&text).map_err(annotate)
        }
        EventFormat::Nmnist => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            read_nmnist_bin(&bytes).map_err(annotate)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_event_csv, write_nmnist_bin};
    use crate::rng::{stream, Purpose};

    fn manifest(samples: Vec<ManifestEntry>) -> DatasetManifest {
        DatasetManifest {
            format: EventFormat::Csv,
            sensor: SensorDims {
                width: 4,
                height: 1,
                polarities: 1,
            },
            num_classes: 2,
            duration_ms: 10.0,
            crop: None,
            samples,
        }
    }

    fn ev(t_us: u64, x: u32) -> EventRecord {
        EventRecord {
            t_us,
            x,
            y: 0,
            p: 0,
        }
    }

    #[test]
    fn loads_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("s")).unwrap();
        fs::write(
            dir.path().join("s/a.csv"),
            write_event_csv(&[ev(1000, 2), ev(9500, 3)]),
        )
        .unwrap();
        fs::write(dir.path().join("s/b.csv"), write_event_csv(&[ev(0, 0)])).unwrap();
        let m = manifest(vec![
            ManifestEntry {
                path: "s/a.csv".into(),
                label: 1,
            },
            ManifestEntry {
                path: "s/b.csv".into(),
                label: 0,
            },
        ]);
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let ds = Dataset::load(&path).unwrap();
        assert_eq!(ds.len(), 2);
        let grid = m.grid(1.0).unwrap();
        let xs = ds.materialize(&grid, None).unwrap();
        assert_eq!(xs[0].label, 1);
        assert_eq!(xs[0].spikes.get(2, 1), 1.0);
        assert_eq!(xs[0].spikes.get(3, 9), 1.0);
        assert_eq!(xs[1].spikes.total(), 1.0);
    }

    #[test]
    fn nmnist_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = write_nmnist_bin(&[EventRecord {
            t_us: 300,
            x: 33,
            y: 33,
            p: 1,
        }])
        .unwrap();
        fs::write(dir.path().join("a.bin"), bytes).unwrap();
        let mut m = manifest(vec![ManifestEntry {
            path: "a.bin".into(),
            label: 0,
        }]);
        m.format = EventFormat::Nmnist;
        m.sensor = SensorDims {
            width: 34,
            height: 34,
            polarities: 2,
        };
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let ds = Dataset::load(&path).unwrap();
        let xs = ds.materialize(&m.grid(1.0).unwrap(), None).unwrap();
        assert_eq!(xs[0].spikes.units(), &[2, 34, 34]);
        assert_eq!(xs[0].spikes.get(34 * 34 + 33 * 34 + 33, 0), 1.0);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        manifest(vec![]).save(&path).unwrap();
        assert!(Dataset::load(&path).is_err());

        manifest(vec![ManifestEntry {
            path: "a.csv".into(),
            label: 2,
        }])
        .save(&path)
        .unwrap();
        assert!(DatasetManifest::load(&path).is_err());

        manifest(vec![ManifestEntry {
            path: "missing.csv".into(),
            label: 0,
        }])
        .save(&path)
        .unwrap();
        assert!(matches!(Dataset::load(&path), Err(Error::Io { .. })));

        fs::write(dir.path().join("a.csv"), write_event_csv(&[ev(0, 4)])).unwrap();
        manifest(vec![ManifestEntry {
            path: "a.csv".into(),
            label: 0,
        }])
        .save(&path)
        .unwrap();
        assert!(Dataset::load(&path).is_err());

        fs::write(&path, r#"{"format":"csv","sensor":{"width":1,"height":1,"polarities":1},"num_classes":2,"duration_ms":1,"samples":[],"extra":1}"#).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }

    #[test]
    fn random_crop_is_seeded_and_in_range() {
        let dir = tempfile::tempdir().unwrap();
        let events: Vec<_> = (0..40u64)
            .map(|i| ev(i * 1000 + 10, (i % 4) as u32))
            .collect();
        fs::write(dir.path().join("a.csv"), write_event_csv(&events)).unwrap();
        let mut m = manifest(vec![
            ManifestEntry {
                path: "a.csv".into(),
                label: 0
            };
            8
        ]);
        m.duration_ms = 40.0;
        m.crop = Some(CropSpec {
            mode: CropMode::Random,
            length_ms: 10.0,
        });
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let ds = Dataset::load(&path).unwrap();
        let grid = m.grid(1.0).unwrap();
        assert_eq!(grid.num_steps, 10);
        let a = ds
            .materialize(&grid, Some(&mut stream(1, Purpose::Crop, 0)))
            .unwrap();
        let b = ds
            .materialize(&grid, Some(&mut stream(1, Purpose::Crop, 0)))
            .unwrap();
        assert_eq!(a, b);
        // one event per ms, so any 10 ms window holds 9 or 10 of them
        for s in &a {
            assert!(
                (9.0..=10.0).contains(&s.spikes.total()),
                "{}",
                s.spikes.total()
            );
        }
        let c = ds
            .materialize(&grid, Some(&mut stream(2, Purpose::Crop, 0)))
            .unwrap();
        assert_ne!(a, c);
    }
}
