use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use divshare::analysis::{
    distinct_room_owners, learning_curve, learning_curve_svg, read_eval_curve, region_sd_summary, room_owners,
    visitation_heatmap, write_text, CurveSeries, Heatmap, RegionAggregates,
};
use divshare::checkpoint::Checkpoint;
use divshare::envsim::{read_traces, Layout};
use divshare::run::{EVAL_FILE, FINAL_CHECKPOINT, METRICS_FILE, TRACES_FILE};
use divshare::Error;
use image::{Rgb, RgbImage};
use serde::Serialize;

const CELL_PX: u32 = 12;

#[derive(Serialize)]
struct SeedReport {
    seed_dir: String,
    regions: RegionAggregates,
    room_owners: Vec<(String, Option<usize>)>,
    distinct_room_owners: usize,
}

fn seed_dirs(run_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        bail!("run directory {} does not exist", run_dir.display());
    }
    if run_dir.join(FINAL_CHECKPOINT).exists() || run_dir.join(TRACES_FILE).exists() {
        return Ok(vec![run_dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(run_dir)
        .with_context(|| format!("reading {}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingArtifacts {
            dir: run_dir.to_path_buf(),
            missing: vec![METRICS_FILE.into(), EVAL_FILE.into(), TRACES_FILE.into(), FINAL_CHECKPOINT.into()],
        }
        .into());
    }
    Ok(dirs)
}

fn check_artifacts(dir: &Path) -> anyhow::Result<()> {
    let missing: Vec<String> = [METRICS_FILE, EVAL_FILE, TRACES_FILE, FINAL_CHECKPOINT]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing,
        }
        .into());
    }
    Ok(())
}

/// Pooled counts followed by one panel per agent, left to right.
fn heatmap_png(map: &Heatmap, layout: &Layout) -> RgbImage {
    let panels = 1 + map.per_agent.len() as u32;
    let (cols, rows) = (map.cols as u32, map.rows as u32);
    let mut img = RgbImage::from_pixel(panels * (cols + 1) * CELL_PX, rows * CELL_PX, Rgb([255, 255, 255]));
    let pooled = map.pooled();
    let grids: Vec<&[u64]> = std::iter::once(pooled.as_slice()).chain(map.per_agent.iter().map(Vec::as_slice)).collect();
    for (p, grid) in grids.iter().enumerate() {
        let max = grid.iter().copied().max().unwrap_or(0).max(1) as f64;
        for r in 0..map.rows {
            for c in 0..map.cols {
                let color = if !layout.is_open(r, c) {
                    Rgb([60, 60, 60])
                } else {
                    // Log scale so rarely visited cells stay visible.
                    let v = (1.0 + grid[r * map.cols + c] as f64).ln() / (1.0 + max).ln();
                    let fade = (255.0 * (1.0 - v)) as u8;
                    Rgb([255, fade, fade / 2])
                };
                let x0 = (p as u32 * (cols + 1) + c as u32) * CELL_PX;
                let y0 = r as u32 * CELL_PX;
                for y in y0..y0 + CELL_PX {
                    for x in x0..x0 + CELL_PX {
                        img.put_pixel(x, y, color);
                    }
                }
            }
        }
    }
    img
}

pub fn run(run_dir: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let dirs = seed_dirs(run_dir)?;
    for d in &dirs {
        check_artifacts(d)?;
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("analysis"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let layout = Layout::pacmen();

    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for d in &dirs {
        let name = d.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        let traces = read_traces(&d.join(TRACES_FILE))?;
        if traces.is_empty() {
            bail!("{} holds no trace records", d.join(TRACES_FILE).display());
        }
        let learner = Checkpoint::load(&d.join(FINAL_CHECKPOINT))?.to_learner()?;
        let map = visitation_heatmap(&traces, &layout, learner.spec.n_agents)?;
        write_text(&out.join(format!("heatmap_{name}.csv")), &map.to_csv(&layout, None))?;
        for i in 0..map.per_agent.len() {
            write_text(&out.join(format!("heatmap_{name}_agent{i}.csv")), &map.to_csv(&layout, Some(i)))?;
        }
        let png = out.join(format!("heatmap_{name}.png"));
        heatmap_png(&map, &layout).save(&png).with_context(|| format!("writing {}", png.display()))?;

        let sd = region_sd_summary(&learner, &layout, &traces)?;
        write_text(&out.join(format!("sd_ratio_{name}.csv")), &sd.to_csv(&layout))?;
        reports.push(SeedReport {
            seed_dir: name,
            regions: sd.regions.clone(),
            room_owners: room_owners(&map, &layout).into_iter().map(|(d, o)| (d.name().to_string(), o)).collect(),
            distinct_room_owners: distinct_room_owners(&map, &layout),
        });
        curves.push(read_eval_curve(&d.join(EVAL_FILE))?);
    }
    write_text(&out.join("sd_report.json"), &serde_json::to_string_pretty(&reports)?)?;

    let points = learning_curve(&curves);
    let mut csv = String::from("env_steps,return_mean,return_sd,seeds\n");
    for p in &points {
        csv.push_str(&format!("{},{},{},{}\n", p.env_steps, p.mean, p.sd, p.seeds));
    }
    write_text(&out.join("learning_curve.csv"), &csv)?;
    let label = run_dir.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
    write_text(&out.join("learning_curve.svg"), &learning_curve_svg(&[CurveSeries { label, points }]))?;
    println!("analysis written to {}", out.display());
    Ok(())
}
