//! File formats: rate tables and trajectories as CSV, full states as a
//! little-endian binary dump, rate curves as SVG, and JSON state files.
//!
//! Every writer goes through [`write_atomic`], which writes a sibling
//! temporary file and renames it over the target.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{alignment_signal, centrifuge_state, isotropic_state, BasisLayout, RotorState, Trajectory};
use crate::rates::RateRow;
use crate::scattering::{CMatrix, C64};

pub const RATES_HEADER: &str = "j,j_prime,gamma,Gamma_signal,a_coeff,method";
pub const SIG_DIGITS: usize = 12;

/// Decimal rendering with `digits` significant digits. Plain notation is
/// used for decimal exponents in [-5, 15), scientific otherwise. Non-finite
/// values render as an empty field.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    } else {
        sci
    }
}

fn num(x: f64) -> String {
    fmt_sig(x, SIG_DIGITS)
}

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut s = String::from(RATES_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.j,
            r.j_prime,
            num(r.gamma),
            num(r.gamma_signal),
            num(r.a_coeff),
            r.method.tag()
        );
    }
    s
}

pub fn trajectory_header(signal_js: &[u32]) -> String {
    let mut s = String::from("t,trace,purity,min_eig");
    for j in signal_js {
        let _ = write!(s, ",signal_{j}");
    }
    s
}

/// One row per recorded state. `min_eig` is filled on rows where the
/// eigenvalue diagnostic ran (every `eig_every` steps and the end points)
/// and left empty elsewhere.
pub fn trajectory_csv(traj: &Trajectory, signal_js: &[u32]) -> Result<String> {
    let mut s = trajectory_header(signal_js);
    s.push('\n');
    for (st, eig) in traj.states.iter().zip(&traj.state_min_eigenvalues) {
        let _ = write!(
            s,
            "{},{},{},{}",
            num(st.time),
            num(st.trace().re),
            num(st.purity()),
            eig.map(num).unwrap_or_default()
        );
        for &j in signal_js {
            let _ = write!(s, ",{}", num(alignment_signal(st, j)?));
        }
        s.push('\n');
    }
    Ok(s)
}

/// u64 LE dimension D, then D*D (re, im) f64 LE pairs in row-major order.
pub fn state_dump(matrix: &CMatrix) -> Vec<u8> {
    let d = matrix.nrows();
    let mut out = Vec::with_capacity(8 + 16 * d * d);
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for r in 0..d {
        for c in 0..d {
            let z = matrix[(r, c)];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

pub fn read_state_dump(bytes: &[u8]) -> Result<CMatrix> {
    let head: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::State("dump shorter than its header".into()))?;
    let d = u64::from_le_bytes(head) as usize;
    if d.checked_mul(d).and_then(|n| n.checked_mul(16)).map(|n| n + 8) != Some(bytes.len()) {
        return Err(Error::State(format!("dump of {} bytes does not hold a {d}x{d} matrix", bytes.len())));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    Ok(CMatrix::from_fn(d, d, |r, c| {
        let i = 8 + 16 * (r * d + c);
        C64::new(f(i), f(i + 8))
    }))
}

/// Self-contained SVG of (x, y) on log-log axes: one polyline plus axis
/// labels. Points with non-positive coordinates are skipped.
pub fn log_log_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> Result<String> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())
        .map(|p| (p.0.log10(), p.1.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Domain("need two positive points to plot".into()));
    }
    let (w, h, m) = (640.0, 420.0, 60.0);
    let (x0, x1) = span(pts.iter().map(|p| p.0));
    let (y0, y1) = span(pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<path d=\"M{m} {t} V{b} H{r}\" fill=\"none\" stroke=\"black\"/>",
        t = m,
        b = h - m,
        r = w - m
    );
    for k in x0.ceil() as i32..=x1.floor() as i32 {
        let x = sx(k as f64);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>", h - m, h - m + 5.0);
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">1e{k}</text>", h - m + 18.0);
    }
    for k in y0.ceil() as i32..=y1.floor() as i32 {
        let y = sy(k as f64);
        let _ = writeln!(s, "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{m}\" y2=\"{y:.2}\" stroke=\"black\"/>", m - 5.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y:.2}\" font-size=\"11\" text-anchor=\"end\">1e{k}</text>", m - 8.0);
    }
    let coords: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
    let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"{}\"/>", coords.join(" "));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{}</text>", w / 2.0, h - 15.0, xml_escape(x_label));
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        h / 2.0,
        h / 2.0,
        xml_escape(y_label)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn span(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Initial-state file.
///
/// ```json
/// {"kind": "centrifuge", "amplitudes": [[10, 0.7071, 0.0], [12, 0.7071, 0.0]]}
/// {"kind": "isotropic", "populations": [[10, 0.5], [12, 0.5]]}
/// ```
///
/// The layout spans the smallest to the largest listed j unless `j_min` or
/// `j_max` widen it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateFile {
    Centrifuge {
        amplitudes: Vec<(u32, f64, f64)>,
        #[serde(default)]
        j_min: Option<u32>,
        #[serde(default)]
        j_max: Option<u32>,
    },
    Isotropic {
        populations: Vec<(u32, f64)>,
        #[serde(default)]
        j_min: Option<u32>,
        #[serde(default)]
        j_max: Option<u32>,
    },
}

impl StateFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::State(format!("state file: {e}")))
    }

    pub fn build(&self) -> Result<RotorState> {
        let (js, lo, hi): (Vec<u32>, _, _) = match self {
            StateFile::Centrifuge { amplitudes, j_min, j_max } => (amplitudes.iter().map(|a| a.0).collect(), j_min, j_max),
            StateFile::Isotropic { populations, j_min, j_max } => (populations.iter().map(|a| a.0).collect(), j_min, j_max),
        };
        let (Some(&a), Some(&b)) = (js.iter().min(), js.iter().max()) else {
            return Err(Error::State("state file lists no levels".into()));
        };
        let layout = BasisLayout::new(lo.unwrap_or(a).min(a), hi.unwrap_or(b).max(b))?;
        match self {
            StateFile::Centrifuge { amplitudes, .. } => {
                let mut c = BTreeMap::new();
                for &(j, re, im) in amplitudes {
                    if c.insert(j, C64::new(re, im)).is_some() {
                        return Err(Error::State(format!("j = {j} listed twice")));
                    }
                }
                centrifuge_state(&layout, &c)
            }
            StateFile::Isotropic { populations, .. } => {
                let mut p = BTreeMap::new();
                for &(j, w) in populations {
                    if p.insert(j, w).is_some() {
                        return Err(Error::State(format!("j = {j} listed twice")));
                    }
                }
                isotropic_state(&layout, &p)
            }
        }
    }
}
