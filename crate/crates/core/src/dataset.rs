//! Paired reduced-order / higher-order solution datasets.
//!
//! A sample holds the Q4 solution `u_r`, the Q8 solution `u_h_q8`, its
//! restriction to Q4 nodes `u_h_q4`, and the nodal model error
//! `e = u_h_q4 − u_r`, all in the `(u_x, u_y)`-per-node DOF layout.
//!
//! On disk a dataset is a binary container (`MERR` magic, little-endian
//! header, fixed-size f64 records) plus a JSON sidecar with the generating
//! configuration. Generation appends one record at a time and can resume a
//! partially written file.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::fem::{ElasticSolver, POISSON_RATIO, THICKNESS};
use crate::grf::{
    build_correlation_factor, sample_realization, CorrelationFactor, GrfSpec, MaterialParams,
};
use crate::mesh::{
    build_coincidence_map, build_mesh, restrict_field, CoincidenceMap, ElementOrder, Mesh,
};
use crate::rng;

pub const MAGIC: &[u8; 4] = b"MERR";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 32;
const COUNT_OFFSET: u64 = 8;

/// Everything that determines the generated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Coarse Q4 grid `[n_radial, n_circumferential]`.
    pub q4_grid: [usize; 2],
    /// Fine Q8 grid; must be exactly twice the coarse grid.
    pub q8_grid: [usize; 2],
    pub material: MaterialParams,
    pub poisson: f64,
    pub thickness: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            q4_grid: [20, 40],
            q8_grid: [40, 80],
            material: MaterialParams::default(),
            poisson: POISSON_RATIO,
            thickness: THICKNESS,
            count: 10_000,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        let [m, n] = self.q4_grid;
        if m == 0 || n == 0 {
            return Err(Error::Config(
                "dataset.q4_grid entries must be positive".into(),
            ));
        }
        if self.q8_grid != [2 * m, 2 * n] {
            return Err(Error::Config(format!(
                "dataset.q8_grid must be twice q4_grid ({:?}), got {:?}",
                [2 * m, 2 * n],
                self.q8_grid
            )));
        }
        if !(self.poisson > 0.0 && self.poisson < 0.5) || !(self.thickness > 0.0) {
            return Err(Error::Config(
                "need 0 < poisson < 0.5 and thickness > 0".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 over everything except `count`, so a larger count extends a
    /// dataset generated with the same parameters.
    pub fn generation_hash(&self) -> String {
        let key = Self {
            count: 0,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: u64,
    /// Seed of the sample's random stream.
    pub seed: u64,
    /// Edge force per unit length (N/m).
    pub load: f64,
    /// Modulus-field standard deviation (Pa).
    pub std_used: f64,
    pub u_r: Vec<f64>,
    pub u_h_q8: Vec<f64>,
    pub u_h_q4: Vec<f64>,
    pub e: Vec<f64>,
}

impl Sample {
    /// Recomputes `u_h_q4 − u_r`.
    pub fn recomputed_error(&self) -> Vec<f64> {
        self.u_h_q4
            .iter()
            .zip(&self.u_r)
            .map(|(h, r)| h - r)
            .collect()
    }
}

/// Meshes, correlation factor and solvers shared by all samples.
pub struct GenerationContext {
    pub q4: Mesh,
    pub q8: Mesh,
    pub map: CoincidenceMap,
    pub spec: GrfSpec,
    pub factor: CorrelationFactor,
    q4_solver: ElasticSolver,
    q8_solver: ElasticSolver,
}

impl GenerationContext {
    pub fn new(config: &DatasetConfig) -> Result<Self> {
        config.validate()?;
        let q4 = build_mesh(ElementOrder::Q4, config.q4_grid[0], config.q4_grid[1])?;
        let q8 = build_mesh(ElementOrder::Q8, config.q8_grid[0], config.q8_grid[1])?;
        Self::with_meshes(q4, q8, config)
    }

    /// Uses arbitrary reduced/higher meshes; the higher mesh must contain a
    /// node at every reduced node.
    pub fn with_meshes(reduced: Mesh, higher: Mesh, config: &DatasetConfig) -> Result<Self> {
        let map = build_coincidence_map(&reduced, &higher)?;
        let spec = GrfSpec::for_meshes(config.material.clone(), &reduced, &higher);
        let factor = build_correlation_factor(&spec)?;
        let q4_solver = ElasticSolver::new(&reduced, config.poisson, config.thickness)?;
        let q8_solver = ElasticSolver::new(&higher, config.poisson, config.thickness)?;
        Ok(Self {
            q4: reduced,
            q8: higher,
            map,
            spec,
            factor,
            q4_solver,
            q8_solver,
        })
    }
}

/// One realization, two solves, restriction and error field.
pub fn generate_sample(
    ctx: &GenerationContext,
    sample_index: u64,
    master_seed: u64,
) -> Result<Sample> {
    let keys = [rng::tag::SAMPLE, sample_index];
    let wrap = |source: Error| Error::Sample {
        index: sample_index,
        source: Box::new(source),
    };
    let mut stream = rng::stream(master_seed, &keys);
    let real = sample_realization(&ctx.factor, &ctx.spec, &mut stream).map_err(wrap)?;
    let u_r = ctx.q4_solver.solve(&real.e_q4, real.load).map_err(wrap)?.u;
    let u_h_q8 = ctx.q8_solver.solve(&real.e_q8, real.load).map_err(wrap)?.u;
    let u_h_q4 = restrict_field(&u_h_q8, &ctx.map, ctx.q8.num_nodes()).map_err(wrap)?;
    let e = u_h_q4.iter().zip(&u_r).map(|(h, r)| h - r).collect();
    Ok(Sample {
        index: sample_index,
        seed: rng::derive_seed(master_seed, &keys),
        load: real.load,
        std_used: real.std_used,
        u_r,
        u_h_q8,
        u_h_q4,
        e,
    })
}

/// Sidecar metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub config_hash: String,
    pub q4_grid: [usize; 2],
    pub q8_grid: [usize; 2],
    pub q4_nodes: usize,
    pub q8_nodes: usize,
    pub config: DatasetConfig,
}

impl DatasetMeta {
    pub fn for_config(config: &DatasetConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config_hash: config.generation_hash(),
            q4_grid: config.q4_grid,
            q8_grid: config.q8_grid,
            q4_nodes: ElementOrder::Q4.node_count(config.q4_grid[0], config.q4_grid[1]),
            q8_nodes: ElementOrder::Q8.node_count(config.q8_grid[0], config.q8_grid[1]),
            config: config.clone(),
        }
    }

    pub fn coarse_dofs(&self) -> usize {
        2 * self.q4_nodes
    }

    pub fn fine_dofs(&self) -> usize {
        2 * self.q8_nodes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Moves samples into a train and a test set.
    pub fn split(self, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        let idx = split_indices(self.samples.len(), n_test, seed)?;
        Ok(self.split_by(&idx))
    }

    pub fn split_by(self, idx: &SplitIndices) -> (Dataset, Dataset) {
        let mut is_test = vec![false; self.samples.len()];
        for &k in &idx.test {
            is_test[k] = true;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (k, s) in self.samples.into_iter().enumerate() {
            if is_test[k] {
                test.push(s);
            } else {
                train.push(s);
            }
        }
        (
            Dataset {
                samples: train,
                meta: self.meta.clone(),
            },
            Dataset {
                samples: test,
                meta: self.meta,
            },
        )
    }
}

/// Positions (into the dataset's sample list) of each side of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random split; both index lists come back sorted.
pub fn split_indices(count: usize, n_test: usize, seed: u64) -> Result<SplitIndices> {
    if n_test >= count {
        return Err(Error::InvalidArgument(format!(
            "n_test = {n_test} must be smaller than the sample count {count}"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT]));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { seed, train, test })
}

/// Sidecar path: the dataset path with a `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn record_len(n_r: usize, n_h: usize) -> u64 {
    8 * (4 + 3 * n_r + n_h) as u64
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * values.len());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Appends fixed-size records and keeps the header count current.
pub struct DatasetWriter {
    file: File,
    n_r: usize,
    n_h: usize,
    count: u64,
}

impl DatasetWriter {
    pub fn create(path: &Path, n_r: usize, n_h: usize) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        let mut header = Vec::with_capacity(HEADER_LEN as usize);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        header.extend_from_slice(&(n_r as u64).to_le_bytes());
        header.extend_from_slice(&(n_h as u64).to_le_bytes());
        file.write_all(&header)?;
        Ok(Self {
            file,
            n_r,
            n_h,
            count: 0,
        })
    }

    /// Reopens a file for appending, dropping a trailing partial record.
    /// Returns the writer and the number of complete records.
    pub fn resume(path: &Path, n_r: usize, n_h: usize) -> Result<(Self, u64)> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let header = read_header(&mut file)?;
        if (header.n_r, header.n_h) != (n_r, n_h) {
            return Err(Error::Format(format!(
                "record dimensions {}/{} do not match expected {n_r}/{n_h}",
                header.n_r, header.n_h
            )));
        }
        let len = file.metadata()?.len();
        let complete = (len.saturating_sub(HEADER_LEN) / record_len(n_r, n_h)).min(header.count);
        file.set_len(HEADER_LEN + complete * record_len(n_r, n_h))?;
        let mut w = Self {
            file,
            n_r,
            n_h,
            count: complete,
        };
        w.write_count()?;
        w.file.seek(SeekFrom::End(0))?;
        Ok((w, complete))
    }

    fn write_count(&mut self) -> Result<()> {
        self.file.seek(SeekFrom::Start(COUNT_OFFSET))?;
        self.file.write_all(&self.count.to_le_bytes())?;
        Ok(())
    }

    pub fn append(&mut self, s: &Sample) -> Result<()> {
        check_len("sample u_r", self.n_r, s.u_r.len())?;
        check_len("sample u_h_q8", self.n_h, s.u_h_q8.len())?;
        check_len("sample u_h_q4", self.n_r, s.u_h_q4.len())?;
        check_len("sample e", self.n_r, s.e.len())?;
        self.file.seek(SeekFrom::End(0))?;
        {
            let mut w = BufWriter::new(&mut self.file);
            w.write_all(&s.index.to_le_bytes())?;
            w.write_all(&s.seed.to_le_bytes())?;
            write_f64s(&mut w, &[s.load, s.std_used])?;
            write_f64s(&mut w, &s.u_r)?;
            write_f64s(&mut w, &s.u_h_q8)?;
            write_f64s(&mut w, &s.u_h_q4)?;
            write_f64s(&mut w, &s.e)?;
            w.flush()?;
        }
        self.count += 1;
        self.write_count()
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

struct Header {
    count: u64,
    n_r: usize,
    n_h: usize,
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing MERR magic".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let count = read_u64(r)?;
    let n_r = read_u64(r)? as usize;
    let n_h = read_u64(r)? as usize;
    Ok(Header { count, n_r, n_h })
}

/// Reads every sample of a binary dataset file.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    let mut samples = Vec::with_capacity(h.count as usize);
    for _ in 0..h.count {
        let index = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let ls = read_f64s(&mut r, 2)?;
        samples.push(Sample {
            index,
            seed,
            load: ls[0],
            std_used: ls[1],
            u_r: read_f64s(&mut r, h.n_r)?,
            u_h_q8: read_f64s(&mut r, h.n_h)?,
            u_h_q4: read_f64s(&mut r, h.n_r)?,
            e: read_f64s(&mut r, h.n_r)?,
        });
    }
    Ok(samples)
}

pub fn write_meta(path: &Path, meta: &DatasetMeta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        sidecar_path(path),
    )?)?)
}

/// Loads a dataset (binary file plus sidecar).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let meta = read_meta(path)?;
    let samples = read_samples(path)?;
    if let Some(s) = samples.first() {
        check_len("dataset u_r", meta.coarse_dofs(), s.u_r.len())?;
        check_len("dataset u_h_q8", meta.fine_dofs(), s.u_h_q8.len())?;
    }
    Ok(Dataset { samples, meta })
}

/// Writes the whole dataset (binary file plus sidecar).
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_meta(path, &ds.meta)?;
    let mut w = DatasetWriter::create(path, ds.meta.coarse_dofs(), ds.meta.fine_dofs())?;
    for s in &ds.samples {
        w.append(s)?;
    }
    Ok(())
}

/// Generates `config.count` samples in memory.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    let ctx = GenerationContext::new(config)?;
    let samples = (0..config.count as u64)
        .into_par_iter()
        .map(|k| generate_sample(&ctx, k, config.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        meta: DatasetMeta::for_config(config),
    })
}

/// Generates into `path`, persisting each sample as it completes. An existing
/// file produced by the same generation parameters is resumed from its last
/// complete record; anything else is overwritten.
pub fn generate_dataset_to(config: &DatasetConfig, path: &Path) -> Result<Dataset> {
    let meta = DatasetMeta::for_config(config);
    let (n_r, n_h) = (meta.coarse_dofs(), meta.fine_dofs());
    let resumable =
        path.exists() && read_meta(path).is_ok_and(|m| m.config_hash == meta.config_hash);
    let (mut writer, done) = if resumable {
        DatasetWriter::resume(path, n_r, n_h)?
    } else {
        (DatasetWriter::create(path, n_r, n_h)?, 0)
    };
    write_meta(path, &meta)?;
    if done > config.count as u64 {
        log::warn!(
            "{} holds {done} samples; truncating to {}",
            path.display(),
            config.count
        );
        drop(writer);
        let mut ds = load_dataset(path)?;
        ds.samples.truncate(config.count);
        ds.meta = meta;
        save_dataset(path, &ds)?;
        return Ok(ds);
    }
    if done < config.count as u64 {
        let ctx = GenerationContext::new(config)?;
        let chunk = 4 * rayon::current_num_threads().max(1) as u64;
        let mut next = done;
        while next < config.count as u64 {
            let end = (next + chunk).min(config.count as u64);
            let batch = (next..end)
                .into_par_iter()
                .map(|k| generate_sample(&ctx, k, config.seed))
                .collect::<Vec<_>>();
            for s in batch {
                writer.append(&s?)?;
            }
            log::info!("generated {end}/{} samples", config.count);
            next = end;
        }
    }
    drop(writer);
    let mut ds = load_dataset(path)?;
    ds.samples.truncate(config.count);
    ds.meta = meta;
    Ok(ds)
}

/// Human-readable, lossy CSV export of the coarse-node fields.
pub fn write_csv<W: Write>(mut w: W, ds: &Dataset, q4: &Mesh) -> Result<()> {
    writeln!(
        w,
        "# lossy export for inspection; the binary file is authoritative"
    )?;
    writeln!(w, "sample,node,x,y,u_r_x,u_r_y,u_h_x,u_h_y,e_x,e_y")?;
    for s in &ds.samples {
        check_len("write_csv", q4.num_dofs(), s.u_r.len())?;
        for (a, [x, y]) in q4.nodes().iter().enumerate() {
            let (i, j) = (2 * a, 2 * a + 1);
            writeln!(
                w,
                "{},{a},{x:.6},{y:.6},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                s.index, s.u_r[i], s.u_r[j], s.u_h_q4[i], s.u_h_q4[j], s.e[i], s.e[j]
            )?;
        }
    }
    Ok(())
}

/// Median over all entries of `|e|` divided by the median of `|u_r|`.
pub fn error_scale_ratio(ds: &Dataset) -> f64 {
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let e = median(
        ds.samples
            .iter()
            .flat_map(|s| s.e.iter().map(|v| v.abs()))
            .collect(),
    );
    let u = median(
        ds.samples
            .iter()
            .flat_map(|s| s.u_r.iter().map(|v| v.abs()))
            .collect(),
    );
    e / u
}
