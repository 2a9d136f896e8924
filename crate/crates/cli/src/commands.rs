//! One-shot subcommands. Each returns the text to print on success.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use outfitter_core::backends::mock::MockEmbedder;
use outfitter_core::backends::remote::RemoteBackend;
use outfitter_core::backends::Embedder;
use outfitter_core::catalog::{self, CatalogSnapshot};
use outfitter_core::imaging::{decode_png, encode_png, psnr, ssim, Psnr};
use outfitter_core::{
    fixtures, BackendConfig, BackendKind, BackendMode, Backends, Catalog, Category, ItemKind,
    Orchestrator, Outcome, PipelineConfig, PromptTemplate, RasterImage, Session, Threshold,
};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::error::CliError;

pub type Env<'a> = &'a dyn Fn(&str) -> Option<String>;

pub fn read_png(path: &Path) -> Result<RasterImage, CliError> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_png(&bytes).map_err(|source| CliError::Image {
        path: path.to_owned(),
        source,
    })
}

/// The embedder named by `TF_BACKEND_EMBED_*`, or the mock when `force_mock`
/// is set or nothing remote is configured.
fn embedder(force_mock: bool, env: Env<'_>) -> Result<Option<Arc<dyn Embedder>>, CliError> {
    if force_mock {
        return Ok(None);
    }
    let config = BackendConfig::mock(BackendKind::Embed).with_env(env)?;
    Ok(match config.mode {
        BackendMode::Mock => None,
        BackendMode::Remote => Some(Arc::new(RemoteBackend::new(config)?)),
    })
}

pub fn fixtures(out: &Path) -> Result<String, CliError> {
    fixtures::write_demo_files(out).map_err(CliError::io(out))?;
    Ok(json!({
        "person": out.join("person.png"),
        "images": out.join("garments"),
        "captions": out.join("captions.tsv"),
    })
    .to_string())
}

/// Builds a catalog directory from images plus a captions file. With the
/// mock embedder each image is tagged with its caption first, so text
/// queries find the garments they describe.
pub fn ingest(
    images: &Path,
    captions: &Path,
    out: &Path,
    mock: bool,
    env: Env<'_>,
) -> Result<String, CliError> {
    let ingested = match embedder(mock, env)? {
        Some(remote) => catalog::ingest(images, captions, &*remote)?,
        None => {
            let embed = MockEmbedder::new();
            catalog::ingest_with(images, captions, &embed, |img, entry| {
                embed.tag(img, &entry.caption)
            })?
        }
    };
    ingested.write(out)?;
    let c = &ingested.catalog;
    Ok(json!({
        "out": out,
        "records": c.len(),
        "embedding_dim": c.embedding_dim(),
        "catalog_version": c.catalog_version(),
    })
    .to_string())
}

fn item_for(category: Option<Category>) -> ItemKind {
    match category {
        None => ItemKind::Unspecified,
        Some(Category::Top) => ItemKind::UpperBody,
        Some(Category::Bottom) => ItemKind::LowerBody,
        Some(Category::Dress) => ItemKind::FullBody,
    }
}

/// Ranked catalog hits for `query`: a tab-separated table, or JSON.
pub fn match_query(
    catalog_dir: &Path,
    query: &str,
    k: usize,
    category: Option<Category>,
    mock: bool,
    as_json: bool,
    env: Env<'_>,
) -> Result<String, CliError> {
    if k == 0 {
        return Err(CliError::InvalidArgument("--k must be positive".into()));
    }
    if query.trim().is_empty() {
        return Err(CliError::InvalidArgument(
            "--query must not be empty".into(),
        ));
    }
    let catalog = Catalog::load(catalog_dir)?;
    let embed: Arc<dyn Embedder> =
        embedder(mock, env)?.unwrap_or_else(|| Arc::new(MockEmbedder::new()));
    let hits = catalog::search(&catalog, query, k, &*embed, item_for(category))?;
    let rows: Vec<_> = hits
        .iter()
        .enumerate()
        .map(|(i, (id, score))| {
            (
                i + 1,
                catalog.get(id).expect("hit is in catalog"),
                score.value(),
            )
        })
        .collect();
    if as_json {
        let results: Vec<_> = rows
            .iter()
            .map(|(rank, r, score)| {
                json!({"rank": rank, "garment_id": r.garment_id, "category": r.category, "caption": r.caption, "score": score})
            })
            .collect();
        return Ok(json!({"query": query, "results": results}).to_string());
    }
    let mut out = String::from("rank\tgarment_id\tcategory\tscore\tcaption");
    for (rank, r, score) in rows {
        out.push_str(&format!(
            "\n{rank}\t{}\t{}\t{score:.6}\t{}",
            r.garment_id, r.category, r.caption
        ));
    }
    Ok(out)
}

pub struct EditArgs<'a> {
    pub person: &'a Path,
    pub instruction: &'a str,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub mock: bool,
    pub catalog: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub tau: Option<f64>,
}

/// Runs one instruction through the full pipeline and writes the result.
/// With `mock` every backend is the deterministic stand-in and, unless a
/// catalog is given, the built-in fixture garments form the catalog.
pub fn edit(args: &EditArgs<'_>, env: Env<'_>) -> Result<String, CliError> {
    let person = read_png(args.person)?;
    let config = match args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::from_toml("", Path::new("."), env)?,
    };
    let backends = if args.mock {
        Backends::mock()
    } else {
        Backends::from_configs(&config.backends)?
    };
    let tau = match args.tau {
        Some(t) => {
            Threshold::new(t).map_err(|e| CliError::InvalidArgument(format!("--tau: {e}")))?
        }
        None if args.mock => Threshold::new(Threshold::DEFAULT_MOCK).expect("in range"),
        None => config.tau,
    };
    let template = match &config.template {
        Some(path) => {
            PromptTemplate::from_file(path).map_err(|e| CliError::InvalidArgument(e.to_string()))?
        }
        None => PromptTemplate::builtin(),
    };
    let catalog_dir: Option<PathBuf> = args.catalog.map(Path::to_owned).or(config.catalog.clone());
    let catalog = match catalog_dir {
        Some(dir) => CatalogSnapshot::load(&dir)?,
        None if args.mock => fixtures::catalog_snapshot(&*backends.embed)?,
        None => CatalogSnapshot::empty(),
    };
    let pipeline = PipelineConfig {
        tau,
        ..PipelineConfig::default()
    };
    let orch = Orchestrator::new(template, backends, catalog, pipeline);
    let mut session = Session::new("cli");
    let turn = orch.handle_message(&mut session, args.instruction, Some(person), args.seed)?;
    match (&turn.trace.outcome, &turn.image) {
        (Outcome::Edited, Some(image)) => {
            fs::write(args.out, encode_png(image)).map_err(CliError::io(args.out))?;
            Ok(json!({"reply": turn.reply, "out": args.out, "trace": turn.trace}).to_string())
        }
        (Outcome::RefusedNotTryOn, _) => Err(CliError::Refused(turn.reply)),
        (Outcome::ErrorWithCode(e), _) => Err(CliError::Step(e.clone())),
        (Outcome::Edited, None) => unreachable!("edited turns carry an image"),
    }
}

struct Row {
    name: String,
    psnr: Psnr,
    ssim: f64,
}

/// PSNR and SSIM for every `ref/<name>.png` against `out/<name>.png` under
/// `dir`.
pub fn eval(dir: &Path, as_json: bool) -> Result<String, CliError> {
    let ref_dir = dir.join("ref");
    let out_dir = dir.join("out");
    let mut names: Vec<String> = fs::read_dir(&ref_dir)
        .map_err(CliError::io(&ref_dir))?
        .filter_map(Result::ok)
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::InvalidArgument(format!(
            "no PNG files in {}",
            ref_dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(names.len());
    for name in names {
        let a = read_png(&ref_dir.join(&name))?;
        let out_path = out_dir.join(&name);
        let b = read_png(&out_path)?;
        let image_err = |source| CliError::Image {
            path: out_path.clone(),
            source,
        };
        // Compare colour against colour when either side has it.
        let (a, b) = if a.channels() == b.channels() {
            (a, b)
        } else {
            (a.to_rgb(), b.to_rgb())
        };
        rows.push(Row {
            psnr: psnr(&a, &b).map_err(image_err)?,
            ssim: ssim(&a, &b).map_err(image_err)?,
            name,
        });
    }
    let n = rows.len() as f64;
    let mean_psnr = if rows.iter().any(|r| r.psnr == Psnr::Infinite) {
        Psnr::Infinite
    } else {
        Psnr::Finite(rows.iter().map(|r| r.psnr.value()).sum::<f64>() / n)
    };
    let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;

    if as_json {
        let pairs: Vec<_> = rows
            .iter()
            .map(|r| json!({"image": r.name, "psnr_db": r.psnr, "ssim": r.ssim}))
            .collect();
        return Ok(
            json!({"pairs": pairs, "mean": {"psnr_db": mean_psnr, "ssim": mean_ssim}}).to_string(),
        );
    }
    let fmt_psnr = |p: Psnr| match p {
        Psnr::Infinite => "Infinite".to_owned(),
        Psnr::Finite(v) => format!("{v:.4}"),
    };
    let mut out = String::from("image\tpsnr_db\tssim");
    for r in &rows {
        out.push_str(&format!(
            "\n{}\t{}\t{:.6}",
            r.name,
            fmt_psnr(r.psnr),
            r.ssim
        ));
    }
    out.push_str(&format!("\nmean\t{}\t{mean_ssim:.6}", fmt_psnr(mean_psnr)));
    Ok(out)
}
