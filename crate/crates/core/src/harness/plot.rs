use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::method::{RunStatus, StepKind};

use super::SweepResult;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 42.0;

fn color(p: StepKind) -> &'static str {
    match p {
        StepKind::Constant => "#1f77b4",
        StepKind::Spectral => "#d62728",
        StepKind::LineSearch => "#2ca02c",
    }
}

struct LogAxis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl LogAxis {
    fn map(&self, v: f64) -> f64 {
        let (a, b) = (self.lo.log10(), self.hi.log10());
        let t = if b > a { (v.log10() - a) / (b - a) } else { 0.5 };
        self.px_lo + t * (self.px_hi - self.px_lo)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        let lo = self.lo.log10().ceil() as i32;
        let hi = self.hi.log10().floor() as i32;
        lo..=hi
    }
}

/// SVG with one log-log panel per tracking variant: `d_max` against `k̄`,
/// one polyline per policy. MAXITER cells sit at `max_iter`; DIVERGED cells
/// are crosses on the top border.
pub fn sweep_svg(res: &SweepResult) -> String {
    let variants = &res.config.variants;
    let panels = variants.len().max(1);
    let width = PANEL_W * panels as f64;
    let (x_lo, x_hi) = match (res.grid.first(), res.grid.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => (1e-3, 1.0),
    };
    let y_hi = (res.config.max_iter.max(10)) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{PANEL_H}" fill="white"/>"#);

    for (pi, variant) in variants.iter().enumerate() {
        let ox = PANEL_W * pi as f64;
        let x = LogAxis { lo: x_lo, hi: x_hi, px_lo: ox + MARGIN_L, px_hi: ox + PANEL_W - MARGIN_R };
        let y = LogAxis { lo: 1.0, hi: y_hi, px_lo: PANEL_H - MARGIN_B, px_hi: MARGIN_T };
        let (left, right, top, bottom) = (x.px_lo, x.px_hi, y.px_hi, y.px_lo);
        let _ = writeln!(
            out,
            r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            right - left,
            bottom - top
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">B: {}</text>"#,
            (left + right) / 2.0,
            MARGIN_T - 10.0,
            variant.label()
        );
        for e in x.decades() {
            let px = x.map(10f64.powi(e));
            let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 4.0);
            let _ = writeln!(out, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#, bottom + 16.0);
        }
        for e in y.decades() {
            let py = y.map(10f64.powi(e));
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="black"/>"#, left - 4.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, left - 6.0, py + 4.0);
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">d_max</text>"#,
            (left + right) / 2.0,
            PANEL_H - 8.0
        );

        for (li, policy) in res.config.policies.iter().enumerate() {
            let c = color(*policy);
            let cells = res.cells_for(*variant, *policy);
            let pts: Vec<String> = cells
                .iter()
                .filter(|cell| cell.status != RunStatus::Diverged)
                .map(|cell| format!("{:.2},{:.2}", x.map(cell.d_max), y.map((cell.iterations.max(1)) as f64)))
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            }
            for cell in cells.iter().filter(|cell| cell.status == RunStatus::Diverged) {
                let px = x.map(cell.d_max);
                let _ = writeln!(
                    out,
                    r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{c}"/>"#,
                    px - 3.0,
                    top - 3.0,
                    px + 3.0,
                    top + 3.0,
                    px - 3.0,
                    top + 3.0,
                    px + 3.0,
                    top - 3.0
                );
            }
            let ly = top + 14.0 + 13.0 * li as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="1.5"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                left + 8.0,
                left + 24.0,
                left + 28.0,
                ly + 4.0,
                policy.label()
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_plot(res: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, sweep_svg(res))?;
    Ok(())
}
