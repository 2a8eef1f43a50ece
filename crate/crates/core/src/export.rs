//! Artifact formats: CSV curves, masks, profiles and time slices, the JSON
//! summary and the manifest, plus parsers for everything that is read back.
//!
//! Numbers are written with 12 significant digits. CSV files start with
//! `# key=value` comment lines, one of which is always `config_hash`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{GridError, PolarGrid, RadialProfile, RegionMask, TimeSlice, DEFAULT_NODE_CAP};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Format(String),
}

impl ExportError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ExportError::Parse { line, message: message.into() }
    }
}

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Decimal text with at most 12 significant digits; `inf`, `-inf`, `nan` for
/// non-finite values.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let r = round_sig(x);
        if r == 0.0 {
            "0".into()
        } else {
            r.to_string()
        }
    }
}

fn parse_num(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// A float that serializes rounded to 12 significant digits, or as the string
/// `"inf"` / `"-inf"` / `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(round_sig(self.0))
        } else {
            s.serialize_str(&fmt_num(self.0))
        }
    }
}

fn header(out: &mut String, meta: &[(&str, String)]) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
}

/// `# key=value` comment lines at the top of a CSV text, and the remaining body
/// with its starting line number.
fn split_meta(text: &str) -> (Vec<(String, String)>, usize) {
    let mut meta = Vec::new();
    let mut consumed = 0;
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            consumed += 1;
        } else if t.is_empty() {
            consumed += 1;
        } else {
            break;
        }
    }
    (meta, consumed)
}

fn meta_get<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Data rows of a CSV body with the expected header, as `(line number, fields)`.
fn rows(text: &str, expected: &[&str]) -> Result<Vec<(usize, Vec<String>)>, ExportError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let head = reader.headers().map_err(|e| ExportError::parse(1, e.to_string()))?.clone();
    if head.iter().collect::<Vec<_>>() != expected {
        return Err(ExportError::parse(
            head.position().map_or(1, |p| p.line() as usize),
            format!("expected header {:?}, found {:?}", expected.join(","), head.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            ExportError::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != expected.len() {
            return Err(ExportError::parse(line, format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let _ = w.write_record(fields);
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// `r,theta,x,y` rows for a curve given in polar coordinates.
pub fn curve_csv(points: &[(f64, f64)], config_hash: &str, label: &str) -> String {
    let mut out = String::new();
    header(&mut out, &[("config_hash", config_hash.to_string()), ("curve", label.to_string())]);
    out.push_str("r,theta,x,y\n");
    for &(r, th) in points {
        let fields = [r, th, r * th.cos(), r * th.sin()].map(fmt_num);
        out.push_str(&csv_line(&fields));
    }
    out
}

/// One `theta_index,first_exit_r_index` row per column.
pub fn mask_csv(grid: &PolarGrid, mask: &RegionMask, config_hash: &str) -> String {
    let (n_r, n_theta) = mask.dims();
    let mut out = String::new();
    header(
        &mut out,
        &[
            ("config_hash", config_hash.to_string()),
            ("n_r", n_r.to_string()),
            ("n_theta", n_theta.to_string()),
            ("dr", fmt_num(grid.dr())),
        ],
    );
    out.push_str("theta_index,first_exit_r_index\n");
    for j in 0..n_theta {
        let _ = writeln!(out, "{j},{}", mask.exit_index(j));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMask {
    pub config_hash: Option<String>,
    pub mask: RegionMask,
}

/// Reads a mask written by [`mask_csv`]. Every column must appear exactly once.
pub fn parse_mask_csv(text: &str) -> Result<ParsedMask, ExportError> {
    let (meta, _) = split_meta(text);
    let dim = |key: &str| -> Result<usize, ExportError> {
        let v = meta_get(&meta, key).ok_or_else(|| ExportError::Format(format!("missing `# {key}=` line")))?;
        v.parse::<usize>().map_err(|_| ExportError::Format(format!("{key} must be a count, found {v:?}")))
    };
    let (n_r, n_theta) = (dim("n_r")?, dim("n_theta")?);
    if n_r == 0 || n_theta == 0 || n_r.saturating_mul(n_theta) > DEFAULT_NODE_CAP {
        return Err(ExportError::Format(format!("unsupported mask size {n_r} x {n_theta}")));
    }
    let mut exit = vec![usize::MAX; n_theta];
    for (line, f) in rows(text, &["theta_index", "first_exit_r_index"])? {
        let j: usize = f[0].parse().map_err(|_| ExportError::parse(line, format!("bad theta_index {:?}", f[0])))?;
        let e: usize = f[1].parse().map_err(|_| ExportError::parse(line, format!("bad first_exit_r_index {:?}", f[1])))?;
        if j >= n_theta {
            return Err(ExportError::parse(line, format!("theta_index {j} out of range 0..{n_theta}")));
        }
        if exit[j] != usize::MAX {
            return Err(ExportError::parse(line, format!("theta_index {j} repeated")));
        }
        exit[j] = e;
    }
    if let Some(j) = exit.iter().position(|&e| e == usize::MAX) {
        return Err(ExportError::Format(format!("column {j} missing")));
    }
    let mask = RegionMask::from_exit_indices(n_r, n_theta, &exit).map_err(|e: GridError| ExportError::Format(e.to_string()))?;
    Ok(ParsedMask { config_hash: meta_get(&meta, "config_hash").map(str::to_string), mask })
}

/// `theta,f` rows with `inf` for columns that never leave `Ω`.
pub fn profile_csv(profile: &RadialProfile, config_hash: &str) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &[
            ("config_hash", config_hash.to_string()),
            ("dr", fmt_num(profile.dr)),
            ("dtheta", fmt_num(profile.dtheta)),
        ],
    );
    out.push_str("theta,f\n");
    for (j, &f) in profile.f.iter().enumerate() {
        out.push_str(&csv_line(&[fmt_num(profile.theta(j)), fmt_num(f)]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProfile {
    pub config_hash: Option<String>,
    pub dr: Option<f64>,
    /// `(θ, f)`; `f` may be `+∞`
    pub points: Vec<(f64, f64)>,
}

/// Reads a profile written by [`profile_csv`].
pub fn parse_profile_csv(text: &str) -> Result<ParsedProfile, ExportError> {
    let (meta, _) = split_meta(text);
    let mut points = Vec::new();
    for (line, f) in rows(text, &["theta", "f"])? {
        let theta = parse_num(&f[0]).filter(|t| t.is_finite()).ok_or_else(|| ExportError::parse(line, format!("bad theta {:?}", f[0])))?;
        let r = parse_num(&f[1]).filter(|&r| r >= 0.0).ok_or_else(|| ExportError::parse(line, format!("bad f {:?}", f[1])))?;
        points.push((theta, r));
    }
    let dr = meta_get(&meta, "dr").and_then(parse_num).filter(|d| *d > 0.0 && d.is_finite());
    Ok(ParsedProfile { config_hash: meta_get(&meta, "config_hash").map(str::to_string), dr, points })
}

/// Node list of one time slice: `set,r_index,theta_index` with `set` `A` or `B`;
/// the pole is `r_index` 0.
pub fn slice_csv(grid: &PolarGrid, slice: &TimeSlice, config_hash: &str) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &[
            ("config_hash", config_hash.to_string()),
            ("t", fmt_num(slice.t)),
            ("n_r", grid.n_r().to_string()),
            ("n_theta", grid.n_theta().to_string()),
        ],
    );
    out.push_str("set,r_index,theta_index\n");
    for (label, mask) in [("A", &slice.a), ("B", &slice.b)] {
        for node in mask.iter() {
            let (i, j) = grid.coords(node);
            let _ = writeln!(out, "{label},{i},{j}");
        }
    }
    out
}

/// Two-column `r,G` samples; a header line and `#` comments are allowed.
pub fn parse_metric_table(text: &str) -> Result<Vec<(f64, f64)>, ExportError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ExportError::parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(ExportError::parse(line, format!("expected 2 columns, found {}", rec.len())));
        }
        let (a, b) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match (a, b) {
            (Ok(r), Ok(g)) if r.is_finite() && g.is_finite() => out.push((r, g)),
            (Ok(_), Ok(_)) => return Err(ExportError::parse(line, "samples must be finite")),
            // a header row
            _ if k == 0 => {}
            _ => return Err(ExportError::parse(line, format!("cannot read {:?} as numbers", rec.iter().collect::<Vec<_>>()))),
        }
    }
    if out.is_empty() {
        return Err(ExportError::Format("no samples".into()));
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` under `dir` and records it for the manifest.
#[derive(Debug, Default)]
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    artifacts: &'a [ManifestEntry],
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, ExportError> {
        fs::create_dir_all(dir).map_err(|source| ExportError::Io { path: dir.to_path_buf(), source })?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<PathBuf, ExportError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| ExportError::Io { path: parent.to_path_buf(), source })?;
        }
        fs::write(&path, contents).map_err(|source| ExportError::Io { path: path.clone(), source })?;
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ManifestEntry { path: rel.to_string(), bytes: contents.len(), sha256: sha256_hex(contents) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, ExportError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| ExportError::Format(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes `manifest.json` listing every artifact, sorted by path.
    pub fn finish(mut self, config_hash: &str) -> Result<Vec<ManifestEntry>, ExportError> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { config_hash, artifacts: &self.entries };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| ExportError::Format(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|source| ExportError::Io { path, source })?;
        Ok(self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::Scenario;
    use crate::grid::{extract_profile, GridParams};
    use crate::metric::SurfaceMetric;
    use proptest::prelude::*;

    fn grid() -> PolarGrid {
        PolarGrid::build(&SurfaceMetric::euclidean(), &Scenario::new(2.0, 1.0).unwrap(), &GridParams::new(3.0, 20, 16, 2)).unwrap()
    }

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(1.429_884_308_401_234_2), "1.4298843084");
        assert_eq!(fmt_num(123_456_789.123_456_79), "123456789.123");
        assert_eq!(serde_json::to_string(&Num(std::f64::consts::PI)).unwrap(), "3.14159265359");
        assert_eq!(serde_json::to_string(&Num(f64::INFINITY)).unwrap(), "\"inf\"");
    }

    #[test]
    fn mask_round_trip() {
        let g = grid();
        let exit: Vec<usize> = (0..16).map(|j| [3, 7, 21, 1][j % 4]).collect();
        let mask = RegionMask::from_exit_indices(20, 16, &exit).unwrap();
        let text = mask_csv(&g, &mask, "abc");
        assert!(text.starts_with("# config_hash=abc\n# n_r=20\n# n_theta=16\n"));
        let back = parse_mask_csv(&text).unwrap();
        assert_eq!(back.mask, mask);
        assert_eq!(back.config_hash.as_deref(), Some("abc"));
    }

    #[test]
    fn mask_errors() {
        let ok = "# n_r=20\n# n_theta=2\ntheta_index,first_exit_r_index\n0,3\n1,4\n";
        assert!(parse_mask_csv(ok).is_ok());
        assert!(parse_mask_csv(&ok.replace("1,4", "0,4")).is_err());
        assert!(parse_mask_csv(&ok.replace("1,4", "2,4")).is_err());
        assert!(parse_mask_csv(&ok.replace("1,4\n", "")).is_err());
        assert!(parse_mask_csv(&ok.replace("# n_r=20\n", "")).is_err());
        assert!(parse_mask_csv(&ok.replace("1,4", "1,99")).is_err());
        assert!(parse_mask_csv(&ok.replace("theta_index", "theta")).is_err());
        assert!(parse_mask_csv("# n_r=99999999\n# n_theta=99999999\n").is_err());
    }

    #[test]
    fn profile_round_trip() {
        let g = grid();
        let mut exit = vec![5; 16];
        exit[8] = 21;
        let mask = RegionMask::from_exit_indices(20, 16, &exit).unwrap();
        let p = extract_profile(&g, &mask).unwrap();
        let text = profile_csv(&p, "h");
        assert!(text.contains("\ntheta,f\n"));
        assert!(text.contains(",inf\n"));
        let back = parse_profile_csv(&text).unwrap();
        assert_eq!(back.points.len(), 16);
        assert_eq!(back.points[8].1, f64::INFINITY);
        assert_eq!(back.points[3], (round_sig(p.theta(3)), round_sig(p.f[3])));
        assert_eq!(back.dr, Some(round_sig(g.dr())));
        assert!(parse_profile_csv("theta,f\n0,-1\n").is_err());
        assert!(parse_profile_csv("theta,f\nnan,1\n").is_err());
    }

    #[test]
    fn metric_tables() {
        let t = parse_metric_table("r,G\n0,0\n0.5, 0.52\n# note\n1,1.2\n").unwrap();
        assert_eq!(t, vec![(0.0, 0.0), (0.5, 0.52), (1.0, 1.2)]);
        assert!(parse_metric_table("0,0\nx,1\n").is_err());
        assert!(parse_metric_table("0,0,0\n").is_err());
        assert!(parse_metric_table("r,G\n").is_err());
        assert!(parse_metric_table("0,inf\n").is_err());
    }

    #[test]
    fn curve_rows() {
        let text = curve_csv(&[(2.0, std::f64::consts::FRAC_PI_2)], "h", "arc");
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("2,1.57079632679,"), "{last}");
        assert!(text.contains("\nr,theta,x,y\n"));
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("b.csv", b"x\n").unwrap();
        w.write("a/c.csv", b"y\n").unwrap();
        let entries = w.finish("h").unwrap();
        assert_eq!(entries[0].path, "a/c.csv");
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_hash"], "h");
        assert_eq!(manifest["artifacts"][1]["sha256"], sha256_hex(b"x\n"));
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent(x in -1e12f64..1e12) {
            let r = round_sig(x);
            prop_assert_eq!(round_sig(r), r);
            prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap(), r);
        }

        #[test]
        fn parsers_never_panic(s in "\\PC{0,200}") {
            let _ = parse_mask_csv(&s);
            let _ = parse_profile_csv(&s);
            let _ = parse_metric_table(&s);
        }
    }
}
