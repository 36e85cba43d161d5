//! Static log-log SVG plots of CSV time series.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

/// One plot: column `column` of a CSV against its `t` column, with a guide
/// line of slope `-target` through the data point nearest `anchor_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub column: String,
    pub target: f64,
    pub fitted_slope: Option<f64>,
    pub anchor_t: f64,
}

/// Reads `t` and `column` from a CSV written by this crate.
pub fn read_series(csv: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(csv)
        .map_err(|e| Error::param("csv", format!("cannot read {}: {e}", csv.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let ti = header
        .iter()
        .position(|h| *h == "t")
        .ok_or_else(|| Error::param("csv", format!("{} has no `t` column", csv.display())))?;
    let ci = header
        .iter()
        .position(|h| *h == column)
        .ok_or_else(|| Error::param("column", format!("{column} not in {}", csv.display())))?;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64> {
            cols.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::param("csv", format!("bad value on data line {}", n + 1)))
        };
        out.push((parse(ti)?, parse(ci)?));
    }
    Ok(out)
}

/// Writes `<column>.svg` in `out_dir` for every spec; fails when a series
/// has no positive points to plot.
pub fn emit_plots(csv: &Path, out_dir: &Path, specs: &[PlotSpec]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(specs.len());
    for spec in specs {
        let series = read_series(csv, &spec.column)?;
        let svg = render(&series, spec)?;
        let path = out_dir.join(format!("{}.svg", spec.column));
        std::fs::write(&path, svg)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Log-log SVG of `series` with the guide line.
pub fn render(series: &[(f64, f64)], spec: &PlotSpec) -> Result<String> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| *t > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(t, v)| (t.log10(), v.log10()))
        .collect();
    if pts.is_empty() {
        return Err(Error::param(
            "series",
            format!("{} has no positive values to plot", spec.column),
        ));
    }
    let anchor = pts
        .iter()
        .min_by(|a, b| (a.0 - spec.anchor_t.log10()).abs().total_cmp(&(b.0 - spec.anchor_t.log10()).abs()))
        .copied()
        .expect("nonempty");
    let guide = |x: f64| anchor.1 - spec.target * (x - anchor.0);

    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y).min(guide(x));
        y1 = y1.max(y).max(guide(x));
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<!-- column: {} -->", spec.column);
    let _ = writeln!(s, "<!-- target_slope: {:.6} -->", -spec.target);
    match spec.fitted_slope {
        Some(f) => {
            let _ = writeln!(s, "<!-- fitted_slope: {f:.6} -->");
        }
        None => {
            let _ = writeln!(s, "<!-- fitted_slope: none -->");
        }
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for d in (x0.floor() as i32)..=(x1.ceil() as i32) {
        let x = d as f64;
        if x >= x0 && x <= x1 {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">1e{d}</text>"#,
                sx(x),
                HEIGHT - MARGIN + 16.0
            );
        }
    }
    for d in (y0.floor() as i32)..=(y1.ceil() as i32) {
        let y = d as f64;
        if y >= y0 && y <= y1 {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">1e{d}</text>"#,
                MARGIN - 4.0,
                sy(y) + 4.0
            );
        }
    }
    let poly: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        poly.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-dasharray="6,4"/>"#,
        sx(x0),
        sy(guide(x0)),
        sx(x1),
        sy(guide(x1))
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{} vs t (guide slope {:.4})</text>"#,
        WIDTH / 2.0,
        MARGIN - 20.0,
        spec.column,
        -spec.target
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Slope values embedded as comments by [`render`].
pub fn embedded_slopes(svg: &str) -> (Option<f64>, Option<f64>) {
    let grab = |key: &str| {
        svg.lines()
            .find_map(|l| l.trim().strip_prefix(&format!("<!-- {key}: ")))
            .and_then(|rest| rest.trim_end_matches(" -->").parse::<f64>().ok())
    };
    (grab("target_slope"), grab("fitted_slope"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::fit_decay_slope;

    fn spec(target: f64, fitted: Option<f64>) -> PlotSpec {
        PlotSpec {
            column: "x".into(),
            target,
            fitted_slope: fitted,
            anchor_t: 1.0,
        }
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(render(&[], &spec(1.0, None)).is_err());
        assert!(render(&[(1.0, 0.0), (2.0, 0.0)], &spec(1.0, None)).is_err());
    }

    #[test]
    fn power_law_guide_is_parallel() {
        let series: Vec<(f64, f64)> = (1..=50).map(|i| (i as f64, 2.0 * (i as f64).powf(-0.75))).collect();
        let fit = fit_decay_slope(&series, (1.0, 50.0)).unwrap();
        let svg = render(&series, &spec(0.75, Some(fit.slope))).unwrap();
        let (target, fitted) = embedded_slopes(&svg);
        assert!((target.unwrap() - fitted.unwrap()).abs() < 1e-6);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline") && svg.contains("stroke-dasharray"));
    }

    #[test]
    fn reads_back_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("s.csv");
        std::fs::write(&csv, "t,a,b\n1.0,2.0,nan\n2.0,1.0,nan\n").unwrap();
        assert_eq!(read_series(&csv, "a").unwrap(), vec![(1.0, 2.0), (2.0, 1.0)]);
        assert!(read_series(&csv, "zzz").is_err());
        assert!(read_series(&dir.path().join("missing.csv"), "a").is_err());
        let out = emit_plots(&csv, dir.path(), &[spec(1.0, None)].map(|mut s| {
            s.column = "a".into();
            s
        }))
        .unwrap();
        assert!(out[0].exists());
        assert!(emit_plots(&csv, dir.path(), &[PlotSpec { column: "b".into(), ..spec(1.0, None) }]).is_err());
    }
}
