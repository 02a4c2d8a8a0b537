//! Tables and plain SVG charts from a finished run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::selection::SelectionReport;

use super::eval::{mean_scores, read_score_column, ImageScore};
use super::run::{layout, STAGE_FILES};

pub const NO_EVALUATION: &str = "no evaluation performed";

/// Stages whose outputs are missing from `run_dir`.
pub fn missing_stages(run_dir: &Path) -> Vec<&'static str> {
    STAGE_FILES
        .iter()
        .filter(|(_, files)| files.iter().any(|f| !run_dir.join(f).exists()))
        .map(|(stage, _)| *stage)
        .collect()
}

fn read_scores(path: &Path) -> Result<Vec<ImageScore>> {
    let aji = read_score_column(path, "aji")?;
    let dice = read_score_column(path, "dice")?;
    Ok(aji
        .into_iter()
        .zip(dice)
        .map(|((image, aji), (_, dice))| ImageScore { image, aji, dice })
        .collect())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bar chart. `series` are (name, color); `rows` are (label, values).
fn bar_chart(
    title: &str,
    series: &[(&str, &str)],
    rows: &[(String, Vec<f64>)],
    stacked: bool,
) -> String {
    let bar_w = 18.0;
    let group_w = if stacked {
        bar_w + 14.0
    } else {
        bar_w * series.len() as f64 + 14.0
    };
    let (left, top, plot_h) = (60.0, 40.0, 220.0);
    let width = left + group_w * rows.len().max(1) as f64 + 140.0;
    let height = top + plot_h + 70.0;
    let peak = rows
        .iter()
        .map(|(_, v)| {
            if stacked {
                v.iter().sum::<f64>()
            } else {
                v.iter().cloned().fold(0.0, f64::max)
            }
        })
        .fold(0.0, f64::max);
    let ymax = if peak > 0.0 { peak * 1.1 } else { 1.0 };
    let y = |v: f64| top + plot_h - v / ymax * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="20" font-size="14">{}</text>"#,
        esc(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        top + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = top + plot_h,
        r = width - 140.0
    );
    for tick in 0..=4 {
        let v = ymax * tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            left - 4.0,
            y(v) + 4.0
        );
    }
    for (g, (label, values)) in rows.iter().enumerate() {
        let gx = left + 7.0 + g as f64 * group_w;
        let mut base = 0.0;
        for (i, (&v, (name, color))) in values.iter().zip(series).enumerate() {
            let (x, y0, y1) = if stacked {
                let r = (gx, y(base + v), y(base));
                base += v;
                r
            } else {
                (gx + i as f64 * bar_w, y(v), y(0.0))
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y0:.2}" width="{bar_w}" height="{:.2}" fill="{color}" data-series="{}" data-label="{}" data-value="{v}"/>"#,
                (y1 - y0).max(0.0),
                esc(name),
                esc(label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" transform="rotate(45 {:.1} {:.1})">{}</text>"#,
            gx,
            top + plot_h + 14.0,
            gx,
            top + plot_h + 14.0,
            esc(label)
        );
    }
    for (i, (name, color)) in series.iter().enumerate() {
        let ly = top + 14.0 * i as f64;
        let lx = width - 120.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{ly}" width="10" height="10" fill="{color}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 14.0,
            ly + 9.0,
            esc(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write `report/` under `run_dir`; returns the files written, relative to `run_dir`.
pub fn report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let missing = missing_stages(run_dir);
    if !missing.is_empty() {
        return Err(Error::Invalid(format!(
            "incomplete run in {}; missing stages: {}",
            run_dir.display(),
            missing.join(", ")
        )));
    }
    let sel_path = run_dir.join(layout::SELECTION);
    let text = fs::read_to_string(&sel_path).map_err(|e| Error::io(&sel_path, e))?;
    let selection: SelectionReport = serde_json::from_str(&text)?;

    let dir = run_dir.join(layout::REPORT_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(Path::new(layout::REPORT_DIR).join(name));
        Ok(())
    };

    let mut csv = String::from(
        "cluster,image_id,x,y,s,cluster_size,largest_fine_size,d1,d2,d3,total,score\n",
    );
    let mut rows = Vec::new();
    for c in &selection.clusters {
        let p = &c.chosen;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.cluster,
            p.image_id,
            p.x,
            p.y,
            p.s,
            c.size,
            c.largest_fine_size,
            c.terms.d1,
            c.terms.d2,
            c.terms.d3,
            c.terms.total,
            c.score
        );
        rows.push((
            format!("C{} {}", c.cluster, p),
            vec![c.terms.d1, c.terms.d2, c.terms.d3],
        ));
    }
    put("selection.csv", csv)?;
    put(
        "criterion_terms.svg",
        bar_chart(
            &format!(
                "Criterion terms of selected patches ({})",
                selection.ablation
            ),
            &[
                ("d1 coarse", "#4472c4"),
                ("d2 fine", "#ed7d31"),
                ("d3 consistency", "#70ad47"),
            ],
            &rows,
            true,
        ),
    )?;

    let mut summary = String::new();
    let _ = writeln!(summary, "# Run report\n");
    let _ = writeln!(
        summary,
        "Selection: {} coarse clusters, K2 = {}, ablation `{}`.\n",
        selection.k1, selection.k2, selection.ablation
    );
    for c in &selection.clusters {
        let _ = writeln!(
            summary,
            "- cluster {} ({} patches): {} total {:.6}",
            c.cluster, c.size, c.chosen, c.terms.total
        );
    }
    summary.push('\n');

    let metrics_path = run_dir.join(layout::METRICS);
    let scores = if metrics_path.exists() {
        read_scores(&metrics_path)?
    } else {
        Vec::new()
    };
    match mean_scores(&scores) {
        None => {
            let _ = writeln!(summary, "Evaluation: {NO_EVALUATION}.");
        }
        Some((aji, dice)) => {
            let mut m = String::from("image,aji,dice\n");
            for s in &scores {
                let _ = writeln!(m, "{},{},{}", s.image, s.aji, s.dice);
            }
            put("metrics.csv", m)?;
            let rows: Vec<_> = scores
                .iter()
                .map(|s| (s.image.clone(), vec![s.aji, s.dice]))
                .collect();
            put(
                "metrics.svg",
                bar_chart(
                    "Per-image AJI and Dice",
                    &[("AJI", "#4472c4"), ("Dice", "#ed7d31")],
                    &rows,
                    false,
                ),
            )?;
            let _ = writeln!(
                summary,
                "Evaluation: {} images, mean AJI {aji:.4}, mean Dice {dice:.4}.",
                scores.len()
            );
        }
    }
    put("summary.md", summary)?;
    Ok(written)
}
