//! Hardware cost modelling: an analytic per-slot latency oracle, a
//! Gaussian-process surrogate trained on it, fixed-point emulation, and the
//! genome-level latency used by the search objective.

pub mod fixedpoint;
pub mod gp;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dropout::{block_gamma, DropoutKind};
use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::supernet::{GenomeConfig, SupernetSpec};

pub use fixedpoint::{quantize_q7_8, quantize_value_q7_8, FixedPointFormat, Q7_8};
pub use gp::{gp_fit, GpModel, HyperGrid, Standardizer};

/// Hardware-relevant description of one dropout site: activation size,
/// channel count, short spatial side, and the design placed there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HwConfig {
    pub elements: usize,
    pub channels: usize,
    pub spatial: usize,
    pub kind: DropoutKind,
}

impl HwConfig {
    /// Derives the shape part from a slot activation shape: `(C,H,W)` maps to
    /// `(C*H*W, C, min(H,W))`, a flat `(F,)` to `(F, F, 1)`.
    pub fn from_slot_shape(shape: &[usize], kind: DropoutKind) -> Result<HwConfig> {
        match shape.len() {
            3 => Ok(HwConfig {
                elements: shape[0] * shape[1] * shape[2],
                channels: shape[0],
                spatial: shape[1].min(shape[2]),
                kind,
            }),
            1 => Ok(HwConfig { elements: shape[0], channels: shape[0], spatial: 1, kind }),
            _ => Err(Error::InvalidParam {
                name: "slot_shape",
                message: format!("expected rank 1 or 3, got {shape:?}"),
            }),
        }
    }

    /// Feature vector for the GP: (elements, channels, spatial, one-hot of 4).
    pub fn features(&self) -> Vec<f64> {
        let mut f = vec![self.elements as f64, self.channels as f64, self.spatial as f64, 0.0, 0.0, 0.0, 0.0];
        f[3 + self.kind.index()] = 1.0;
        f
    }
}

/// Cycle coefficients of the analytic latency oracle. Defaults reproduce the
/// qualitative kind ordering Masksembles <= Bernoulli < RandomChannel, Block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyCalibration {
    pub base_cycles_per_element: f64,
    pub cycles_masksembles: f64,
    pub cycles_bernoulli: f64,
    pub cycles_random: f64,
    pub cycles_block: f64,
    /// Reference dropout rate used for the Block seeding estimate.
    pub block_rate: f64,
    /// Reference Block size; clipped to the slot's spatial side.
    pub block_size: usize,
}

impl Default for LatencyCalibration {
    fn default() -> Self {
        LatencyCalibration {
            base_cycles_per_element: 1.0,
            cycles_masksembles: 1.0,
            cycles_bernoulli: 2.0,
            cycles_random: 3.0,
            cycles_block: 3.0,
            block_rate: 0.25,
            block_size: 3,
        }
    }
}

impl LatencyCalibration {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            self.base_cycles_per_element,
            self.cycles_masksembles,
            self.cycles_bernoulli,
            self.cycles_random,
            self.cycles_block,
        ];
        if coeffs.iter().any(|&c| c <= 0.0 || !c.is_finite()) {
            return Err(Error::InvalidParam {
                name: "latency_calibration",
                message: "cycle coefficients must be positive".into(),
            });
        }
        if !(0.0..1.0).contains(&self.block_rate) {
            return Err(Error::InvalidParam {
                name: "latency_calibration",
                message: format!("block_rate must lie in [0, 1), got {}", self.block_rate),
            });
        }
        Ok(())
    }

    /// Expected seed count times block area, per element, for the Block
    /// design at this calibration's reference rate.
    fn block_seed_area(&self, spatial: usize) -> f64 {
        let b = if self.block_size <= spatial { self.block_size } else { 1 };
        if b <= 1 {
            self.block_rate
        } else {
            block_gamma(self.block_rate, b, spatial) * (b * b) as f64
        }
    }
}

/// Latency of one dropout site in milliseconds:
/// `(base_cycles(elements) + kind_cycles) / clock`.
///
/// Kind cycle models: Masksembles fetches one bank row (`c_m * channels`),
/// Bernoulli draws and compares per element (`c_b * elements`), RandomChannel
/// draws per channel then broadcasts over the plane (`c_r * (channels +
/// elements)`), Block seeds and zeroes squares on top of an elementwise scan
/// (`c_k * (gamma_seeds * block^2 + elements)`).
pub fn analytic_latency(cfg: &HwConfig, calib: &LatencyCalibration, clock_mhz: f64) -> f64 {
    let e = cfg.elements as f64;
    let c = cfg.channels as f64;
    let base = calib.base_cycles_per_element * e;
    let kind = match cfg.kind {
        DropoutKind::Masksembles => calib.cycles_masksembles * c,
        DropoutKind::Bernoulli => calib.cycles_bernoulli * e,
        DropoutKind::RandomChannel => calib.cycles_random * (c + e),
        DropoutKind::Block => calib.cycles_block * (calib.block_seed_area(cfg.spatial) * e + e),
    };
    (base + kind) / (clock_mhz * 1e3)
}

/// Shape component of a latency dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HwShape {
    pub elements: usize,
    pub channels: usize,
    pub spatial: usize,
}

impl HwShape {
    pub fn of(cfg: &HwConfig) -> HwShape {
        HwShape { elements: cfg.elements, channels: cfg.channels, spatial: cfg.spatial }
    }
}

/// Training rows for the surrogate plus their standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyDataset {
    rows: Vec<(HwConfig, f64)>,
    standardizer: Standardizer,
}

impl LatencyDataset {
    pub fn from_rows(rows: Vec<(HwConfig, f64)>) -> Result<LatencyDataset> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("latency dataset"));
        }
        if rows.iter().any(|(_, y)| *y <= 0.0 || !y.is_finite()) {
            return Err(Error::InvalidParam {
                name: "latency_dataset",
                message: "latencies must be positive and finite".into(),
            });
        }
        let features: Vec<Vec<f64>> = rows.iter().map(|(cfg, _)| cfg.features()).collect();
        let standardizer = Standardizer::fit(&features);
        Ok(LatencyDataset { rows, standardizer })
    }

    pub fn rows(&self) -> &[(HwConfig, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn target_variance(&self) -> f64 {
        let n = self.rows.len() as f64;
        let mean = self.rows.iter().map(|(_, y)| y).sum::<f64>() / n;
        self.rows.iter().map(|(_, y)| (y - mean) * (y - mean)).sum::<f64>() / n
    }

    /// CSV export with header `elements,channels,spatial,kind,latency_ms`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        writer
            .write_record(["elements", "channels", "spatial", "kind", "latency_ms"])
            .map_err(|e| csv_error(path, e))?;
        for (cfg, y) in &self.rows {
            writer
                .write_record([
                    cfg.elements.to_string(),
                    cfg.channels.to_string(),
                    cfg.spatial.to_string(),
                    cfg.kind.name().to_string(),
                    y.to_string(),
                ])
                .map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<LatencyDataset> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let parse = |field: usize, name: &str| -> Result<&str> {
                record.get(field).ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    offset: i as u64 + 1,
                    message: format!("row {} missing column {name}", i + 1),
                })
            };
            let kind_name = parse(3, "kind")?;
            let kind = DropoutKind::from_name(kind_name).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                offset: i as u64 + 1,
                message: format!("unknown dropout kind '{kind_name}'"),
            })?;
            let num = |field: usize, name: &str| -> Result<f64> {
                parse(field, name)?.parse::<f64>().map_err(|e| Error::Format {
                    path: path.to_path_buf(),
                    offset: i as u64 + 1,
                    message: format!("bad {name}: {e}"),
                })
            };
            rows.push((
                HwConfig {
                    elements: num(0, "elements")? as usize,
                    channels: num(1, "channels")? as usize,
                    spatial: num(2, "spatial")? as usize,
                    kind,
                },
                num(4, "latency_ms")?,
            ));
        }
        LatencyDataset::from_rows(rows)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("{other:?}"),
        },
    }
}

/// One row per (shape, kind) pair over the union of the supernet's slot
/// shapes and the extra grid, labelled by the analytic oracle.
pub fn build_dataset(
    spec: &SupernetSpec,
    calib: &LatencyCalibration,
    grid: &[HwShape],
    clock_mhz: f64,
) -> Result<LatencyDataset> {
    calib.validate()?;
    if clock_mhz <= 0.0 {
        return Err(Error::InvalidParam {
            name: "clock_mhz",
            message: format!("must be positive, got {clock_mhz}"),
        });
    }
    let mut shapes: BTreeSet<HwShape> = grid.iter().copied().collect();
    for slot in &spec.slots {
        let cfg = HwConfig::from_slot_shape(&slot.shape, DropoutKind::Bernoulli)?;
        shapes.insert(HwShape::of(&cfg));
    }
    if shapes.is_empty() {
        return Err(Error::EmptyInput("latency shape grid"));
    }
    let mut rows = Vec::with_capacity(shapes.len() * 4);
    for shape in shapes {
        for kind in DropoutKind::ALL {
            let cfg = HwConfig {
                elements: shape.elements,
                channels: shape.channels,
                spatial: shape.spatial,
                kind,
            };
            rows.push((cfg, analytic_latency(&cfg, calib, clock_mhz)));
        }
    }
    LatencyDataset::from_rows(rows)
}

/// Fits the surrogate on a latency dataset with the default grid scaled to
/// the observed target variance.
pub fn fit_surrogate(dataset: &LatencyDataset, grid: Option<&HyperGrid>) -> Result<GpModel> {
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = HyperGrid::default_for(dataset.target_variance());
            &default_grid
        }
    };
    let features: Vec<Vec<f64>> = dataset.rows().iter().map(|(cfg, _)| cfg.features()).collect();
    let targets: Vec<f64> = dataset.rows().iter().map(|(_, y)| *y).collect();
    gp_fit(&features, &targets, grid)
}

/// Which latency source the evaluator consults per slot.
pub enum LatencyBackend<'a> {
    /// The analytic oracle (ground truth for this artifact).
    Oracle { calib: &'a LatencyCalibration, clock_mhz: f64 },
    /// The fitted GP surrogate; the backbone constant stays analytic.
    Surrogate {
        model: &'a GpModel,
        calib: &'a LatencyCalibration,
        clock_mhz: f64,
    },
}

/// Cycles spent outside the dropout sites: one base pass over every
/// non-slot layer output. Identical for all genomes, so it cancels in
/// latency differences.
pub fn backbone_latency_ms(
    spec: &SupernetSpec,
    calib: &LatencyCalibration,
    clock_mhz: f64,
) -> Result<f64> {
    let shapes = spec.backbone.output_shapes()?;
    let mut cycles = 0.0;
    for (layer, shape) in spec.backbone.layers.iter().zip(shapes.iter()) {
        if !matches!(layer, LayerSpec::DropoutSlot { .. }) {
            cycles += calib.base_cycles_per_element * shape.iter().product::<usize>() as f64;
        }
    }
    Ok(cycles / (clock_mhz * 1e3))
}

/// Total modelled latency of one genome: backbone constant plus per-slot
/// latency from the selected backend.
pub fn genome_latency(
    spec: &SupernetSpec,
    genome: &GenomeConfig,
    backend: &LatencyBackend,
) -> Result<f64> {
    spec.check_genome(genome)?;
    let (calib, clock) = match backend {
        LatencyBackend::Oracle { calib, clock_mhz } => (*calib, *clock_mhz),
        LatencyBackend::Surrogate { calib, clock_mhz, .. } => (*calib, *clock_mhz),
    };
    let mut total = backbone_latency_ms(spec, calib, clock)?;
    for (slot, &choice) in spec.slots.iter().zip(genome.choices.iter()) {
        let kind = slot.choices[choice].kind;
        let cfg = HwConfig::from_slot_shape(&slot.shape, kind)?;
        total += match backend {
            LatencyBackend::Oracle { .. } => analytic_latency(&cfg, calib, clock),
            LatencyBackend::Surrogate { model, .. } => model.predict(&cfg.features()).0,
        };
    }
    Ok(total)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config {
        message: format!("serialization failed: {e}"),
    })?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}
