use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};

use defocus::calib::{calibrate, CalibrationConfig, EdgeConfig, EdgeModel, ImagePair, Normalization};
use defocus::config::{load_model, CameraConfig};
use defocus::depth::{compute_metrics, invert_blur_map, kcam_sweep, BranchPolicy, DEFAULT_RANGE_MAX};
use defocus::optics::{blur_curve, kcam_from_params, BlurModel, CameraParams};
use defocus::raster::{load_blur, load_depth, load_image, save_blur, save_depth, save_image, DepthMap};
use defocus::render::{blur_map_from_depth, refocus, render_pattern, write_dataset_sample, PatternSpec, PatternView, DEFAULT_LAYERS};

use crate::UsageError;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the blur gain of a camera parameter file.
    Kcam {
        #[arg(long)]
        params: PathBuf,
    },
    /// Tabulate defocus blur against object distance as CSV.
    Curve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        s2_min: f64,
        #[arg(long)]
        s2_max: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize defocus from an all-in-focus image and a depth map.
    Refocus {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = DEFAULT_LAYERS)]
        layers: usize,
        /// Output image (.png, .pgm or .ppm).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-pixel blur map as PFM.
        #[arg(long)]
        blur_out: Option<PathBuf>,
        /// Write a dataset sample (image, depth, blur map, meta.txt) here instead of `--out`.
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        #[arg(long, default_value = "sample")]
        stem: String,
    },
    /// Render a sharp circle-grid target.
    Genpattern {
        #[command(flatten)]
        pattern: PatternArgs,
        #[command(flatten)]
        focal: FocalArgs,
        /// Camera to pattern distance, meters.
        #[arg(long)]
        distance_m: f64,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset_x_px: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset_y_px: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a constant depth map as PFM.
        #[arg(long)]
        depth_out: Option<PathBuf>,
        /// Value of that depth map, meters; defaults to the pattern distance.
        #[arg(long)]
        depth_m: Option<f64>,
    },
    /// Estimate gamma and kcam from focused/defocused pattern photographs.
    Calibrate {
        /// Text file with one `focused defocused` path pair per line.
        #[arg(long)]
        manifest: PathBuf,
        /// Camera parameter file supplying the focus distance and, unless
        /// `--f-pix` is given, the focal length in pixels.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        f_pix: Option<f64>,
        #[command(flatten)]
        pattern: PatternArgs,
        #[arg(long, default_value_t = defocus::calib::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = defocus::calib::DEFAULT_SLICES)]
        slices: usize,
        #[arg(long, value_enum, default_value_t = NormalizationArg::PerSlice)]
        normalization: NormalizationArg,
        #[arg(long, value_enum, default_value_t = EdgeModelArg::StepEdge)]
        edge_model: EdgeModelArg,
        #[arg(long, default_value_t = CalibrationConfig::default().min_defocus_ratio)]
        min_defocus_ratio: f64,
        /// key=value summary path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-circle estimates as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Convert a blur map to depth.
    Invert {
        #[arg(long)]
        blur: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "near")]
        policy: BranchPolicy,
        /// Reference depth, required by the oracle policy.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// RMSE of inverted depth over a range of kcam values around the model's.
    Sweep {
        #[arg(long)]
        blur: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "near")]
        policy: BranchPolicy,
        #[arg(long, default_value_t = 0.7)]
        min_factor: f64,
        #[arg(long, default_value_t = 1.3)]
        max_factor: f64,
        #[arg(long, default_value_t = 13)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_RANGE_MAX)]
        range_max: f64,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Depth error measures of a prediction against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RANGE_MAX)]
        range_max: f64,
    },
}

/// Blur model from either a camera parameter file or a `kcam`/`gamma_px`/`s1_m` file.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<BlurModel> {
        match (&self.params, &self.model) {
            (Some(p), _) => {
                let cam = CameraConfig::load(p)?;
                Ok(cam.blur_model().with_context(|| format!("{}", p.display()))?)
            }
            (None, Some(m)) => Ok(load_model(m).with_context(|| format!("{}", m.display()))?),
            (None, None) => unreachable!("clap requires one model source"),
        }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct FocalArgs {
    /// Focal length, pixels.
    #[arg(long)]
    f_pix: Option<f64>,
    /// Camera parameter file to derive the focal length from.
    #[arg(long)]
    params: Option<PathBuf>,
}

impl FocalArgs {
    fn f_pix(&self) -> Result<f64> {
        match (self.f_pix, &self.params) {
            (Some(f), _) => Ok(f),
            (None, Some(p)) => Ok(focal_pixels(&CameraConfig::load(p)?.params)),
            (None, None) => unreachable!("clap requires one focal length source"),
        }
    }
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[arg(long, default_value_t = PatternSpec::default().rows)]
    rows: usize,
    #[arg(long, default_value_t = PatternSpec::default().cols)]
    cols: usize,
    /// Nearest-neighbor center distance, meters.
    #[arg(long, default_value_t = PatternSpec::default().diagonal_spacing)]
    spacing_m: f64,
    #[arg(long, default_value_t = PatternSpec::default().circle_diameter)]
    diameter_m: f64,
    /// Square lattice instead of the staggered grid.
    #[arg(long)]
    symmetric: bool,
}

impl PatternArgs {
    fn spec(&self) -> PatternSpec {
        PatternSpec {
            rows: self.rows,
            cols: self.cols,
            diagonal_spacing: self.spacing_m,
            circle_diameter: self.diameter_m,
            asymmetric: !self.symmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizationArg {
    PerSlice,
    PerImage,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EdgeModelArg {
    StepEdge,
    GaussianTail,
}

/// Focal length in output pixels.
fn focal_pixels(p: &CameraParams) -> f64 {
    p.f / p.p * f64::from(p.out_pix) / f64::from(p.sensor_pix)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Kcam { params } => {
            let cam = CameraConfig::load(&params)?;
            println!("{:.2}", kcam_from_params(&cam.params)?);
            Ok(())
        }
        Command::Curve {
            model,
            s2_min,
            s2_max,
            n,
            out,
        } => {
            let rows = blur_curve(&model.load()?, s2_min, s2_max, n)?;
            let mut csv = String::from("s2_m,sigma_px\n");
            for (s2, sigma) in rows {
                let _ = writeln!(csv, "{s2},{sigma}");
            }
            emit(&csv, out.as_deref())
        }
        Command::Refocus {
            image,
            depth,
            model,
            layers,
            out,
            blur_out,
            dataset_dir,
            stem,
        } => {
            let model = model.load()?;
            let rgb = load_image(&image)?;
            let depth = load_depth(&depth)?;
            match (out, dataset_dir) {
                (Some(out), None) => {
                    save_image(&refocus(&rgb, &depth, &model, layers)?, &out)?;
                    if let Some(b) = blur_out {
                        save_blur(&blur_map_from_depth(&depth, &model), &b)?;
                    }
                    Ok(())
                }
                (None, Some(dir)) => {
                    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    Ok(write_dataset_sample(&dir, &stem, &rgb, &depth, &model, layers)?)
                }
                _ => Err(UsageError("give exactly one of --out and --dataset-dir".into()).into()),
            }
        }
        Command::Genpattern {
            pattern,
            focal,
            distance_m,
            width,
            height,
            offset_x_px,
            offset_y_px,
            out,
            depth_out,
            depth_m,
        } => {
            let view = PatternView::new(distance_m, focal.f_pix()?, width, height).shifted(offset_x_px, offset_y_px);
            let (img, _) = render_pattern(&pattern.spec(), &view)?;
            save_image(&img, &out)?;
            if let Some(path) = depth_out {
                save_depth(&DepthMap::constant(width, height, depth_m.unwrap_or(distance_m))?, &path)?;
            }
            Ok(())
        }
        Command::Calibrate {
            manifest,
            params,
            f_pix,
            pattern,
            threshold,
            slices,
            normalization,
            edge_model,
            min_defocus_ratio,
            out,
            csv,
        } => {
            let cam = CameraConfig::load(&params)?;
            let f_pix = f_pix.unwrap_or_else(|| focal_pixels(&cam.params));
            let config = CalibrationConfig {
                edge: EdgeConfig {
                    threshold,
                    slices,
                    normalization: match normalization {
                        NormalizationArg::PerSlice => Normalization::PerSlice,
                        NormalizationArg::PerImage => Normalization::PerImage,
                    },
                    model: match edge_model {
                        EdgeModelArg::StepEdge => EdgeModel::StepEdge,
                        EdgeModelArg::GaussianTail => EdgeModel::GaussianTail,
                    },
                },
                min_defocus_ratio,
            };
            let paths = read_manifest(&manifest)?;
            let images = paths
                .iter()
                .map(|(f, d)| Ok((load_image(f)?, load_image(d)?)))
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<ImagePair> = images
                .iter()
                .map(|(focused, defocused)| ImagePair { focused, defocused })
                .collect();
            let result = calibrate(&pairs, &pattern.spec(), f_pix, cam.params.s1, &config)?;

            let s = &result.summary;
            let mut text = String::new();
            let _ = writeln!(text, "gamma_px={}", result.gamma);
            let _ = writeln!(text, "kcam={}", s.kcam);
            let _ = writeln!(text, "pairs={}", pairs.len());
            let _ = writeln!(text, "estimates={}", s.total);
            let _ = writeln!(text, "inliers={}", s.inlier_count);
            for (k, v) in [("min", s.min), ("q1", s.q1), ("median", s.median), ("q3", s.q3), ("max", s.max)] {
                let _ = writeln!(text, "kcam_{k}={v}");
            }
            for w in &result.warnings {
                let _ = writeln!(text, "warning={w}");
            }
            if let Some(path) = csv {
                let mut table = String::from("pair,circle,distance_m,lambda_px,kcam\n");
                for e in &result.estimates {
                    let _ = writeln!(table, "{},{},{},{},{}", e.pair, e.circle, e.distance, e.lambda, e.kcam);
                }
                emit(&table, Some(&path))?;
            }
            emit(&text, out.as_deref())
        }
        Command::Invert {
            blur,
            model,
            policy,
            gt,
            out,
        } => {
            let model = model.load()?;
            let gt = match (policy, gt) {
                (BranchPolicy::Oracle, None) => {
                    return Err(UsageError("the oracle policy needs --gt".into()).into());
                }
                (_, gt) => gt.map(load_depth).transpose()?,
            };
            let depth = invert_blur_map(&load_blur(&blur)?, &model, policy, gt.as_ref())?;
            Ok(save_depth(&depth, &out)?)
        }
        Command::Sweep {
            blur,
            gt,
            model,
            policy,
            min_factor,
            max_factor,
            steps,
            range_max,
            out,
        } => {
            if steps < 2 || !(min_factor > 0.0 && min_factor < max_factor) {
                return Err(UsageError(format!(
                    "need --steps >= 2 and 0 < --min-factor < --max-factor, got {steps} steps over [{min_factor}, {max_factor}]"
                ))
                .into());
            }
            let model = model.load()?;
            let kcams: Vec<f64> = (0..steps)
                .map(|i| model.kcam * (min_factor + (max_factor - min_factor) * i as f64 / (steps - 1) as f64))
                .collect();
            let rows = kcam_sweep(&load_blur(&blur)?, &load_depth(&gt)?, &model, &kcams, policy, range_max)?;
            let mut csv = String::from("kcam,rmse\n");
            for (k, rmse) in rows {
                let _ = writeln!(csv, "{k},{rmse}");
            }
            emit(&csv, out.as_deref())
        }
        Command::Metrics { pred, gt, range_max } => {
            let m = compute_metrics(&load_depth(&pred)?, &load_depth(&gt)?, range_max)?;
            print!(
                "rel={}\nmse={}\nrmse={}\nlog10={}\ndelta1={}\ndelta2={}\ndelta3={}\ncount={}\n",
                m.rel, m.mse, m.rmse, m.log10, m.delta1, m.delta2, m.delta3, m.count
            );
            Ok(())
        }
    }
}

/// Pairs of image paths, resolved relative to the manifest's directory.
fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [focused, defocused] = fields[..] else {
            return Err(UsageError(format!(
                "{} line {}: expected `focused defocused`, got {} fields",
                path.display(),
                i + 1,
                fields.len()
            ))
            .into());
        };
        pairs.push((base.join(focused), base.join(defocused)));
    }
    if pairs.is_empty() {
        return Err(UsageError(format!("{} lists no image pairs", path.display())).into());
    }
    Ok(pairs)
}
