//! `xsep` command implementations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use xsep_core::dictfile::{read_coupled, read_single, write_coupled, write_single};
use xsep_core::fsio::write_atomic;
use xsep_core::metrics::ssim;
use xsep_core::pgm::{read_pgm, write_pgm};
use xsep_core::pipeline::{mca_pairs, train_coupled_scales, train_mca_scales};
use xsep_core::separation::{mca_separate, separate_image};
use xsep_core::synth::{synthesize, Panel};
use xsep_core::{Image, RunConfig, Separation};

/// Output images are written with this maxval.
pub const OUTPUT_MAXVAL: u16 = 65535;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] xsep_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write to stdout: {0}")]
    Stdout(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "xsep", version, about = "Separate mixed X-ray scans of double-sided paintings")]
pub struct Cli {
    /// key = value run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn dictionaries from single-sided panels.
    ///
    /// Coupled mode takes VISUAL XRAY path pairs; with --mca only X-ray
    /// images are given and one plain dictionary per scale is learned.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mca: bool,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Separate a mixed X-ray guided by photographs of both sides.
    Separate {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
        mixed: PathBuf,
        visual1: PathBuf,
        visual2: PathBuf,
    },
    /// Morphological component analysis baseline; pass --dict twice.
    Mca {
        #[arg(long, required = true, num_args = 1)]
        dict: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        mixed: PathBuf,
    },
    /// SSIM between two images.
    Ssim { a: PathBuf, b: PathBuf },
    /// Generate a synthetic double-sided scene with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_image(path: &Path) -> Result<Image, CliError> {
    Ok(read_pgm(path)?.image)
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Train { out, mca, images } => cmd_train(&cfg, images, *mca, out, stdout),
        Command::Separate {
            dict,
            out,
            mixed,
            visual1,
            visual2,
        } => cmd_separate(&cfg, mixed, visual1, visual2, dict, out, stdout),
        Command::Mca { dict, out, mixed } => {
            if dict.len() != 2 {
                return Err(CliError::Usage(format!(
                    "mca needs exactly two --dict files, got {}",
                    dict.len()
                )));
            }
            cmd_mca(&cfg, mixed, &dict[0], &dict[1], out, stdout)
        }
        Command::Ssim { a, b } => cmd_ssim(&cfg, a, b, stdout),
        Command::Synth { out } => cmd_synth(&cfg, out, stdout),
    }
}

pub fn cmd_train(
    cfg: &RunConfig,
    images: &[PathBuf],
    mca: bool,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if mca {
        let xrays = images.iter().map(|p| read_image(p)).collect::<Result<Vec<_>, _>>()?;
        let dicts = train_mca_scales(&xrays, cfg)?;
        write_single(out, &dicts)?;
        writeln!(stdout, "wrote {} scale(s) to {}", dicts.len(), out.display())?;
        return Ok(());
    }
    if !images.len().is_multiple_of(2) {
        return Err(CliError::Usage(
            "coupled training takes VISUAL XRAY pairs (even number of paths)".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(images.len() / 2);
    for p in images.chunks(2) {
        pairs.push((read_image(&p[0])?, read_image(&p[1])?));
    }
    let model = train_coupled_scales(&pairs, cfg)?;
    for (s, trace) in model.traces.iter().enumerate() {
        for (i, r) in trace.iter().enumerate() {
            writeln!(
                stdout,
                "scale={} iteration={} coded={:.6e} updated={:.6e} normalized={:.6e}",
                s + 1,
                i + 1,
                r.coded,
                r.updated,
                r.normalized
            )?;
        }
    }
    write_coupled(out, &model.triples)?;
    writeln!(stdout, "wrote {} scale(s) to {}", model.triples.len(), out.display())?;
    Ok(())
}

fn metrics_text(method: &str, cfg: &RunConfig, score: f64, sep: &Separation) -> String {
    let mut s = String::new();
    let p = &cfg.ssim;
    writeln!(s, "method={method}").unwrap();
    writeln!(s, "ssim={score:.4}").unwrap();
    writeln!(s, "ssim_window={}", p.window_side).unwrap();
    writeln!(s, "ssim_sigma={}", p.sigma).unwrap();
    writeln!(s, "ssim_k1={}", p.k1).unwrap();
    writeln!(s, "ssim_k2={}", p.k2).unwrap();
    match p.dynamic_range {
        Some(r) => writeln!(s, "ssim_range={r}").unwrap(),
        None => writeln!(s, "ssim_range=auto").unwrap(),
    }
    for r in &sep.reports {
        let counts: Vec<String> = r.max_block_counts.iter().map(|c| c.to_string()).collect();
        let budgets: Vec<String> = r.budgets.iter().map(|c| c.to_string()).collect();
        writeln!(
            s,
            "scale{}_patches={} scale{}_max_counts={} scale{}_budgets={}",
            r.scale,
            r.patches,
            r.scale,
            counts.join(","),
            r.scale,
            budgets.join(",")
        )
        .unwrap();
    }
    s
}

fn write_separation(
    method: &str,
    cfg: &RunConfig,
    sep: &Separation,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let score = ssim(&sep.x1, &sep.x2, &cfg.ssim)?;
    write_pgm(&with_suffix(out, "_side1.pgm"), &sep.x1, OUTPUT_MAXVAL)?;
    write_pgm(&with_suffix(out, "_side2.pgm"), &sep.x2, OUTPUT_MAXVAL)?;
    write_atomic(
        &with_suffix(out, "_metrics.txt"),
        metrics_text(method, cfg, score, sep).as_bytes(),
    )?;
    writeln!(stdout, "ssim={score:.4}")?;
    Ok(())
}

pub fn cmd_separate(
    cfg: &RunConfig,
    mixed: &Path,
    visual1: &Path,
    visual2: &Path,
    dict: &Path,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let m = read_image(mixed)?;
    let y1 = read_image(visual1)?;
    let y2 = read_image(visual2)?;
    let dicts = read_coupled(dict)?;
    let sep = separate_image(&m, &y1, &y2, &dicts, &cfg.separation_config())?;
    write_separation("proposed", cfg, &sep, out, stdout)
}

pub fn cmd_mca(
    cfg: &RunConfig,
    mixed: &Path,
    dict1: &Path,
    dict2: &Path,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let m = read_image(mixed)?;
    let pairs = mca_pairs(&read_single(dict1)?, &read_single(dict2)?)?;
    let sep = mca_separate(
        &m,
        &pairs,
        cfg.mca_sparsity,
        cfg.mca_sparsity,
        &cfg.separation_config(),
    )?;
    write_separation("mca", cfg, &sep, out, stdout)
}

pub fn cmd_ssim(cfg: &RunConfig, a: &Path, b: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let score = ssim(&read_image(a)?, &read_image(b)?, &cfg.ssim)?;
    writeln!(stdout, "ssim={score:.4}")?;
    Ok(())
}

fn codes_text(panels: &[(&str, &Panel)]) -> String {
    let mut s = String::from("# panel scale patch block index value\n");
    for (name, p) in panels {
        for c in &p.codes {
            for (block, code) in [("z", &c.z), ("v", &c.v)] {
                for &(i, w) in code.entries() {
                    writeln!(s, "{name} {} {} {block} {i} {w:?}", c.scale, c.patch).unwrap();
                }
            }
        }
    }
    s
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scene = synthesize(cfg, cfg.seed)?;
    std::fs::create_dir_all(out).map_err(|e| xsep_core::Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let images: [(&str, &Image); 9] = [
        ("visual1", &scene.front.visual),
        ("visual2", &scene.back.visual),
        ("xray1", &scene.front.xray),
        ("xray2", &scene.back.xray),
        ("mixed", &scene.mixed),
        ("train1_visual", &scene.train_front.visual),
        ("train1_xray", &scene.train_front.xray),
        ("train2_visual", &scene.train_back.visual),
        ("train2_xray", &scene.train_back.xray),
    ];
    for (name, img) in images {
        write_pgm(&out.join(format!("{name}.pgm")), img, OUTPUT_MAXVAL)?;
    }
    write_coupled(&out.join("truth.cdl"), &scene.truth)?;
    let codes = codes_text(&[
        ("front", &scene.front),
        ("back", &scene.back),
        ("train1", &scene.train_front),
        ("train2", &scene.train_back),
    ]);
    write_atomic(&out.join("codes.txt"), codes.as_bytes())?;
    writeln!(stdout, "wrote synthetic scene (seed {}) to {}", cfg.seed, out.display())?;
    Ok(())
}
