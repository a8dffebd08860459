//! Files: data CSV, flat configuration, truth bundles and the draws archive.
//!
//! Every writer goes through a temporary file in the target directory that is
//! renamed into place, so readers never observe half-written output.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ApafaError, Result};
use crate::gibbs::ChainConfig;
use crate::model::{active_factor_counts, Dataset, DrawMeta, Hyperparameters, ModelState, OutcomeKind, PosteriorDraws, SyntheticTruth};

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| ApafaError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ApafaError::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ApafaError::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- data CSV

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    /// Outcomes are 0/1 and go through the probit link.
    pub binary: bool,
    /// Only labels declared in the header (`group:a|b|c`) are accepted.
    pub strict_labels: bool,
}

/// Parses `y1..yp, group, z1..zq` with a header row. Empty outcome cells are
/// missing. Study labels are the declared ones (if any) followed by unseen
/// labels in order of first appearance.
pub fn read_dataset_csv<R: Read>(reader: R, opts: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let group_col = header
        .iter()
        .position(|h| h == "group" || h.starts_with("group:"))
        .ok_or_else(|| ApafaError::Format("header has no `group` column".into()))?;
    if group_col == 0 {
        return Err(ApafaError::Format("no outcome columns before `group`".into()));
    }
    let declared: Vec<String> = header[group_col]
        .strip_prefix("group:")
        .map(|list| list.split('|').map(str::to_string).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default();
    if opts.strict_labels && declared.is_empty() {
        return Err(ApafaError::Format("strict labels need a declared label set, e.g. `group:a|b|c`".into()));
    }
    let p = group_col;
    let q = header.len() - group_col - 1;

    let mut labels = declared.clone();
    let mut lookup: HashMap<String, usize> = labels.iter().enumerate().map(|(s, l)| (l.clone(), s)).collect();
    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut groups = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = r + 2;
        if record.len() != header.len() {
            return Err(ApafaError::Format(format!("line {line}: {} fields, header has {}", record.len(), header.len())));
        }
        for j in 0..p {
            let cell = &record[j];
            y.push(if cell.is_empty() { f64::NAN } else { parse_number(cell, line, &header[j])? });
        }
        let label = &record[group_col];
        if label.is_empty() {
            return Err(ApafaError::Format(format!("line {line}: empty group label")));
        }
        let index = match lookup.get(label) {
            Some(&s) => s,
            None if opts.strict_labels => {
                return Err(ApafaError::Format(format!("line {line}: group label '{label}' is not declared")));
            }
            None => {
                labels.push(label.to_string());
                lookup.insert(label.to_string(), labels.len() - 1);
                labels.len() - 1
            }
        };
        groups.push(index);
        for j in group_col + 1..header.len() {
            let cell = &record[j];
            if cell.is_empty() {
                return Err(ApafaError::Format(format!("line {line}: covariate `{}` is missing", &header[j])));
            }
            z.push(parse_number(cell, line, &header[j])?);
        }
    }
    let n = groups.len();
    if n == 0 {
        return Err(ApafaError::Format("no data rows".into()));
    }
    let y = DMatrix::from_row_slice(n, p, &y);
    let kind = if opts.binary { OutcomeKind::Binary } else { OutcomeKind::Continuous };
    let mut dataset = Dataset::from_groups(y, &groups, labels.len(), kind)?.with_group_labels(labels)?;
    if q > 0 {
        dataset = dataset.with_covariates(DMatrix::from_row_slice(n, q, &z))?;
    }
    Ok(dataset)
}

fn parse_number(cell: &str, line: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ApafaError::Format(format!("line {line}, column `{column}`: '{cell}' is not a finite number"))),
    }
}

fn csv_error(e: csv::Error) -> ApafaError {
    ApafaError::Format(e.to_string())
}

pub fn load_dataset_csv(path: &Path, opts: CsvOptions) -> Result<Dataset> {
    read_dataset_csv(fs::File::open(path)?, opts)
}

/// Serializes a dataset so that [`read_dataset_csv`] rebuilds it exactly.
/// The label set is declared in the header whenever first-appearance order
/// would not reproduce the study numbering.
pub fn dataset_csv_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    let (n, p) = (dataset.n(), dataset.p());
    let q = dataset.n_covariates();
    let labels = dataset.group_labels();
    let mut first_seen = Vec::new();
    for &g in dataset.groups() {
        if !first_seen.contains(&g) {
            first_seen.push(g);
        }
    }
    let natural = first_seen.len() == labels.len() && first_seen.iter().enumerate().all(|(a, &b)| a == b);
    let group_header = if natural { "group".to_string() } else { format!("group:{}", labels.join("|")) };

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=p).map(|j| format!("y{j}")).collect();
    header.push(group_header);
    header.extend((1..=q).map(|j| format!("z{j}")));
    wtr.write_record(&header).map_err(csv_error)?;
    for i in 0..n {
        let mut row: Vec<String> = (0..p)
            .map(|j| if dataset.is_missing(i, j) { String::new() } else { dataset.y()[(i, j)].to_string() })
            .collect();
        row.push(labels[dataset.groups()[i]].clone());
        if let Some(z) = dataset.z() {
            row.extend((0..q).map(|j| z[(i, j)].to_string()));
        }
        wtr.write_record(&row).map_err(csv_error)?;
    }
    wtr.into_inner().map_err(|e| ApafaError::Format(e.to_string()))
}

pub fn save_dataset_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    write_atomic(path, &dataset_csv_bytes(dataset)?)
}

// ---------------------------------------------------------------- config

/// Parses flat `key = value` text on top of the defaults for `p` variables.
///
/// Keys are the field names of [`Hyperparameters`] and [`ChainConfig`];
/// `adapt_schedule.a0` / `adapt_schedule.a1` reach the nested schedule,
/// `sweep` takes a comma-separated step list and `adapt_end = none` restores
/// the end-of-burn-in default. `#` starts a comment.
pub fn parse_config(text: &str, p: usize) -> Result<(Hyperparameters, ChainConfig)> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ApafaError::Format(format!("config line {}: expected key = value", no + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    apply_overrides(Hyperparameters::for_dimension(p), ChainConfig::default(), &pairs, p)
}

pub fn load_config(path: &Path, p: usize) -> Result<(Hyperparameters, ChainConfig)> {
    parse_config(&fs::read_to_string(path)?, p)
}

/// Applies `key = value` overrides (same keys as [`parse_config`]).
pub fn apply_overrides(
    hyper: Hyperparameters,
    chain: ChainConfig,
    pairs: &[(String, String)],
    p: usize,
) -> Result<(Hyperparameters, ChainConfig)> {
    let bad = |e: serde_json::Error| ApafaError::Format(e.to_string());
    let mut h = serde_json::to_value(&hyper).map_err(bad)?;
    let mut c = serde_json::to_value(&chain).map_err(bad)?;
    let mut seen = HashSet::new();
    for (key, raw) in pairs {
        if !seen.insert(key.as_str()) {
            return Err(ApafaError::Format(format!("config key `{key}` given twice")));
        }
        let slot = config_slot(&mut h, key)
            .or_else(|| config_slot(&mut c, key))
            .ok_or_else(|| ApafaError::Format(format!("unknown config key `{key}`")))?;
        *slot = coerce(slot, raw).ok_or_else(|| ApafaError::Format(format!("config key `{key}`: cannot use '{raw}'")))?;
    }
    let hyper: Hyperparameters = serde_json::from_value(h).map_err(bad)?;
    let chain: ChainConfig = serde_json::from_value(c).map_err(bad)?;
    hyper.validate(p)?;
    chain.validate()?;
    Ok((hyper, chain))
}

fn config_slot<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    key.split('.').try_fold(root, |v, part| v.as_object_mut()?.get_mut(part)).filter(|v| !v.is_object())
}

fn coerce(slot: &Value, raw: &str) -> Option<Value> {
    Some(match slot {
        Value::Array(_) => Value::Array(
            raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| Value::String(s.to_string())).collect(),
        ),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Bool(_) => Value::Bool(raw.parse().ok()?),
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().ok()?),
        Value::Number(_) => Value::from(raw.parse::<f64>().ok().filter(|v| v.is_finite())?),
        Value::Null if raw.eq_ignore_ascii_case("none") => Value::Null,
        Value::Null => Value::from(raw.parse::<u64>().ok()?),
        Value::Object(_) => return None,
    })
}

// ---------------------------------------------------------------- truth

/// On-disk form of [`SyntheticTruth`]: matrices as lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub lambda: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub psi: Vec<Vec<u8>>,
    pub sigma_diag: Vec<f64>,
    pub omega_by_group: Vec<Vec<Vec<f64>>>,
    pub group_labels: Vec<usize>,
}

fn rows<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows<T: nalgebra::Scalar + Copy>(r: &[Vec<T>], ncols: usize, what: &str) -> Result<DMatrix<T>> {
    if r.iter().any(|row| row.len() != ncols) {
        return Err(ApafaError::Format(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(r.len(), ncols, |i, j| r[i][j]))
}

impl From<&SyntheticTruth> for TruthFile {
    fn from(t: &SyntheticTruth) -> Self {
        Self {
            lambda: rows(&t.lambda),
            gamma: rows(&t.gamma),
            psi: rows(&t.psi),
            sigma_diag: t.sigma_diag.iter().copied().collect(),
            omega_by_group: t.omega_by_group.iter().map(rows).collect(),
            group_labels: t.group_labels.clone(),
        }
    }
}

impl TruthFile {
    pub fn into_truth(self) -> Result<SyntheticTruth> {
        let p = self.sigma_diag.len();
        let n = self.group_labels.len();
        let d = self.lambda.first().map_or(0, Vec::len);
        let k = self.psi.first().map_or(0, Vec::len);
        if self.lambda.len() != p || self.gamma.len() != p || self.psi.len() != n {
            return Err(ApafaError::Format("truth file dimensions disagree".into()));
        }
        Ok(SyntheticTruth {
            lambda: from_rows(&self.lambda, d, "lambda")?,
            gamma: from_rows(&self.gamma, k, "gamma")?,
            psi: from_rows(&self.psi, k, "psi")?,
            sigma_diag: DVector::from_vec(self.sigma_diag),
            omega_by_group: self.omega_by_group.iter().map(|o| from_rows(o, p, "omega")).collect::<Result<_>>()?,
            group_labels: self.group_labels,
        })
    }
}

pub fn save_truth(path: &Path, truth: &SyntheticTruth) -> Result<()> {
    write_json(path, &TruthFile::from(truth))
}

pub fn load_truth(path: &Path) -> Result<SyntheticTruth> {
    read_json::<TruthFile>(path)?.into_truth()
}

// ---------------------------------------------------------------- draws archive

pub const ARCHIVE_MAGIC: &[u8; 8] = b"APAFADRW";
pub const ARCHIVE_VERSION: u32 = 1;

/// Order of the blocks inside every draw record. Each record starts with
/// four little-endian `u64` (d, k, len v_eta, len v_phi); the blocks follow
/// as little-endian `f64`, matrices in column-major order.
pub const DRAW_LAYOUT: [&str; 17] = [
    "lambda[p,d]",
    "gamma[p,k]",
    "eta[n,d]",
    "phi_tilde[n,k]",
    "psi[n,k]",
    "beta[r,k]",
    "sigma_diag[p]",
    "zeta_lambda[d]",
    "zeta_gamma[k]",
    "tau_phi[k]",
    "tau_eta[d]",
    "stick_v_eta[len_v_eta]",
    "stick_v_phi[len_v_phi]",
    "cusp_indicator_eta[d]",
    "cusp_indicator_phi[k]",
    "probit_z[n,p] if has_probit",
    "imputed[m]",
];

/// JSON header stored after the magic and version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub n: usize,
    pub p: usize,
    /// Rows of β: studies plus covariates.
    pub gate_rows: usize,
    pub has_probit: bool,
    pub n_draws: usize,
    pub missing_cells: Vec<(usize, usize)>,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub layout: Vec<String>,
}

/// Companion index: where every record starts, plus the wall time, which is
/// kept out of the archive so that equal seeds give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsIndex {
    pub archive: String,
    pub version: u32,
    pub header_offset: u64,
    pub header_len: u64,
    pub draw_offsets: Vec<u64>,
    pub draw_lengths: Vec<u64>,
    pub runtime_micros: u64,
}

/// `draws.bin` → `draws.index.json`.
pub fn index_path(archive: &Path) -> PathBuf {
    archive.with_extension("index.json")
}

/// Encodes the draws; the returned index has an empty `archive` name.
pub fn encode_draws(draws: &PosteriorDraws) -> Result<(Vec<u8>, DrawsIndex)> {
    let first = draws.states.first();
    let (n, p, gate_rows) = first.map_or((0, 0, 0), |s| (s.n(), s.p(), s.beta.nrows()));
    let has_probit = first.is_some_and(|s| s.probit_z.is_some());
    if draws.states.iter().any(|s| s.n() != n || s.p() != p || s.beta.nrows() != gate_rows || s.probit_z.is_some() != has_probit) {
        return Err(ApafaError::invalid("draws disagree on n, p, gate rows or probit latents"));
    }
    let m = draws.missing_cells.len();
    if draws.imputed.len() != draws.len() || draws.imputed.iter().any(|v| v.len() != m) {
        return Err(ApafaError::invalid("one imputation vector per draw, one value per missing cell"));
    }
    let header = ArchiveHeader {
        n,
        p,
        gate_rows,
        has_probit,
        n_draws: draws.len(),
        missing_cells: draws.missing_cells.clone(),
        seed: draws.meta.seed,
        iterations: draws.meta.iterations,
        burn_in: draws.meta.burn_in,
        thinning: draws.meta.thinning,
        layout: DRAW_LAYOUT.iter().map(|s| s.to_string()).collect(),
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| ApafaError::Format(e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    let header_offset = out.len() as u64;
    out.extend_from_slice(&header_json);

    let mut draw_offsets = Vec::with_capacity(draws.len());
    let mut draw_lengths = Vec::with_capacity(draws.len());
    for (state, imputed) in draws.states.iter().zip(&draws.imputed) {
        let start = out.len();
        encode_state(&mut out, state, imputed);
        draw_offsets.push(start as u64);
        draw_lengths.push((out.len() - start) as u64);
    }
    let index = DrawsIndex {
        archive: String::new(),
        version: ARCHIVE_VERSION,
        header_offset,
        header_len: header_json.len() as u64,
        draw_offsets,
        draw_lengths,
        runtime_micros: draws.meta.runtime_micros,
    };
    Ok((out, index))
}

fn encode_state(out: &mut Vec<u8>, s: &ModelState, imputed: &[f64]) {
    for len in [s.d(), s.k(), s.stick_v_eta.len(), s.stick_v_phi.len()] {
        out.extend_from_slice(&(len as u64).to_le_bytes());
    }
    let mut put = |values: &mut dyn Iterator<Item = f64>| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(&mut s.lambda.iter().copied());
    put(&mut s.gamma.iter().copied());
    put(&mut s.eta.iter().copied());
    put(&mut s.phi_tilde.iter().copied());
    put(&mut s.psi.iter().map(|&v| f64::from(v)));
    put(&mut s.beta.iter().copied());
    put(&mut s.sigma_diag.iter().copied());
    put(&mut s.zeta_lambda.iter().copied());
    put(&mut s.zeta_gamma.iter().copied());
    put(&mut s.tau_phi.iter().map(|&v| f64::from(v)));
    put(&mut s.tau_eta.iter().copied());
    put(&mut s.stick_v_eta.iter().copied());
    put(&mut s.stick_v_phi.iter().copied());
    put(&mut s.cusp_indicator_eta.iter().map(|&v| v as f64));
    put(&mut s.cusp_indicator_phi.iter().map(|&v| v as f64));
    if let Some(z) = &s.probit_z {
        put(&mut z.iter().copied());
    }
    put(&mut imputed.iter().copied());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ApafaError::Format(format!("archive truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| ApafaError::Format("length does not fit in memory".into()))
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let raw = self.take(len.checked_mul(8).ok_or_else(|| ApafaError::Format("block too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_vec(rows, cols, self.f64s(rows * cols)?))
    }

    fn flags(&mut self, len: usize) -> Result<Vec<u8>> {
        self.f64s(len)?
            .into_iter()
            .map(|v| if v == 0.0 || v == 1.0 { Ok(v as u8) } else { Err(ApafaError::Format(format!("indicator {v} is not 0/1"))) })
            .collect()
    }

    fn labels(&mut self, len: usize) -> Result<Vec<usize>> {
        self.f64s(len)?
            .into_iter()
            .map(|v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(ApafaError::Format(format!("label {v} is not a count"))) })
            .collect()
    }
}

/// Inverse of [`encode_draws`]; the runtime comes from the index when given.
pub fn decode_draws(bytes: &[u8], runtime_micros: u64) -> Result<PosteriorDraws> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != ARCHIVE_MAGIC {
        return Err(ApafaError::Format("not a draws archive (bad magic)".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("four bytes"));
    if version != ARCHIVE_VERSION {
        return Err(ApafaError::Format(format!("unsupported archive version {version}")));
    }
    let header_len = cur.usize()?;
    let header: ArchiveHeader =
        serde_json::from_slice(cur.take(header_len)?).map_err(|e| ApafaError::Format(format!("archive header: {e}")))?;
    let (n, p, r) = (header.n, header.p, header.gate_rows);
    let m = header.missing_cells.len();

    let mut states = Vec::with_capacity(header.n_draws);
    let mut imputed = Vec::with_capacity(header.n_draws);
    for _ in 0..header.n_draws {
        let (d, k, lv_eta, lv_phi) = (cur.usize()?, cur.usize()?, cur.usize()?, cur.usize()?);
        let lambda = cur.matrix(p, d)?;
        let gamma = cur.matrix(p, k)?;
        let eta = cur.matrix(n, d)?;
        let phi_tilde = cur.matrix(n, k)?;
        let psi = DMatrix::from_vec(n, k, cur.flags(n * k)?);
        let beta = cur.matrix(r, k)?;
        let sigma_diag = DVector::from_vec(cur.f64s(p)?);
        let zeta_lambda = cur.f64s(d)?;
        let zeta_gamma = cur.f64s(k)?;
        let tau_phi = cur.flags(k)?;
        let tau_eta = cur.f64s(d)?;
        let stick_v_eta = cur.f64s(lv_eta)?;
        let stick_v_phi = cur.f64s(lv_phi)?;
        let cusp_indicator_eta = cur.labels(d)?;
        let cusp_indicator_phi = cur.labels(k)?;
        let probit_z = if header.has_probit { Some(cur.matrix(n, p)?) } else { None };
        imputed.push(cur.f64s(m)?);
        states.push(ModelState {
            lambda,
            gamma,
            eta,
            phi_tilde,
            psi,
            beta,
            sigma_diag,
            zeta_lambda,
            zeta_gamma,
            tau_phi,
            tau_eta,
            stick_v_eta,
            stick_v_phi,
            cusp_indicator_eta,
            cusp_indicator_phi,
            probit_z,
        });
    }
    if cur.pos != bytes.len() {
        return Err(ApafaError::Format(format!("{} trailing bytes after the last draw", bytes.len() - cur.pos)));
    }
    let derived = states.iter().map(active_factor_counts).collect();
    Ok(PosteriorDraws {
        states,
        derived,
        missing_cells: header.missing_cells,
        imputed,
        meta: DrawMeta {
            seed: header.seed,
            iterations: header.iterations,
            burn_in: header.burn_in,
            thinning: header.thinning,
            runtime_micros,
        },
    })
}

/// Writes the archive and its index next to it.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<DrawsIndex> {
    let (bytes, mut index) = encode_draws(draws)?;
    index.archive = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    write_atomic(path, &bytes)?;
    write_json(&index_path(path), &index)?;
    Ok(index)
}

/// Reads an archive; the runtime is taken from the index when one exists.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    let bytes = fs::read(path)?;
    let idx = index_path(path);
    let runtime = if idx.exists() { read_json::<DrawsIndex>(&idx)?.runtime_micros } else { 0 };
    decode_draws(&bytes, runtime)
}
