//! The in-shop garment catalog: records, ingestion, persistence and search.
//!
//! On disk a catalog is a directory holding `catalog.meta` (JSON header and
//! record metadata), `catalog.vec` (binary embeddings) and the garment images
//! the records point to. `catalog.vec` layout:
//!
//! ```text
//! magic "OUTFVEC1" | dim: u32 LE | count: u32 LE | count*dim f32 LE | sha256
//! ```
//!
//! The trailing SHA-256 covers the bytes of `catalog.meta` followed by every
//! preceding byte of `catalog.vec`, so damage to either file is detected.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{BackendError, Embedder};
use crate::imaging::{decode_png, ImagingError, RasterImage};
use crate::invocation::ItemKind;
use crate::matching::{top_k, Embedding, MatchError, MatchScore};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "catalog.meta";
pub const VEC_FILE: &str = "catalog.vec";
pub const IMAGE_DIR: &str = "images";
const VEC_MAGIC: &[u8; 8] = b"OUTFVEC1";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("image `{0}` listed in the captions file does not exist")]
    MissingImage(String),
    #[error("captions file line {line}: {reason}")]
    CaptionParse { line: usize, reason: String },
    #[error("image `{name}` could not be decoded: {source}")]
    BadImage {
        name: String,
        #[source]
        source: ImagingError,
    },
    #[error("duplicate garment id `{0}`")]
    DuplicateId(String),
    #[error("garment `{garment_id}` has a {found}-dim embedding, catalog uses {expected}")]
    DimensionMismatch {
        garment_id: String,
        expected: usize,
        found: usize,
    },
    #[error("catalog format version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt catalog index: {0}")]
    CorruptIndex(String),
    #[error("unknown garment `{0}`")]
    UnknownGarment(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Top,
    Bottom,
    Dress,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Top, Category::Bottom, Category::Dress];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Top => "top",
            Category::Bottom => "bottom",
            Category::Dress => "dress",
        }
    }

    /// Category eligible for an item; `None` admits every category.
    pub fn for_item(item: ItemKind) -> Option<Category> {
        match item {
            ItemKind::UpperBody => Some(Category::Top),
            ItemKind::LowerBody => Some(Category::Bottom),
            ItemKind::FullBody => Some(Category::Dress),
            ItemKind::Unspecified => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}` (expected top, bottom or dress)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarmentRecord {
    pub garment_id: String,
    pub category: Category,
    pub caption: String,
    /// Relative to the catalog directory.
    pub image_path: String,
    pub embedding: Embedding,
}

/// Immutable set of garments sharing one embedding dimension, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    records: Vec<GarmentRecord>,
    embedding_dim: usize,
    catalog_version: u64,
}

impl Catalog {
    pub fn new(mut records: Vec<GarmentRecord>) -> Result<Self, CatalogError> {
        records.sort_by(|a, b| a.garment_id.cmp(&b.garment_id));
        let embedding_dim = records.first().map_or(0, |r| r.embedding.dim());
        for pair in records.windows(2) {
            if pair[0].garment_id == pair[1].garment_id {
                return Err(CatalogError::DuplicateId(pair[0].garment_id.clone()));
            }
        }
        if let Some(r) = records.iter().find(|r| r.embedding.dim() != embedding_dim) {
            return Err(CatalogError::DimensionMismatch {
                garment_id: r.garment_id.clone(),
                expected: embedding_dim,
                found: r.embedding.dim(),
            });
        }
        Ok(Self {
            records,
            embedding_dim,
            catalog_version: 1,
        })
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            embedding_dim: 0,
            catalog_version: 1,
        }
    }

    /// Sets the content revision reported by reloads.
    pub fn with_version(mut self, catalog_version: u64) -> Self {
        self.catalog_version = catalog_version;
        self
    }

    pub fn records(&self) -> &[GarmentRecord] {
        &self.records
    }

    pub fn get(&self, garment_id: &str) -> Option<&GarmentRecord> {
        self.records
            .binary_search_by(|r| r.garment_id.as_str().cmp(garment_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn catalog_version(&self) -> u64 {
        self.catalog_version
    }

    /// Writes `catalog.meta` and `catalog.vec` into `dir` (created if
    /// needed). Images are not copied.
    pub fn save(&self, dir: &Path) -> Result<(), CatalogError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let meta = MetaFile {
            format_version: FORMAT_VERSION,
            catalog_version: self.catalog_version,
            embedding_dim: self.embedding_dim,
            records: self
                .records
                .iter()
                .map(|r| MetaRecord {
                    garment_id: r.garment_id.clone(),
                    category: r.category,
                    caption: r.caption.clone(),
                    image_path: r.image_path.clone(),
                })
                .collect(),
        };
        let mut meta_bytes = serde_json::to_vec_pretty(&meta).expect("catalog metadata serializes");
        meta_bytes.push(b'\n');

        let mut vec_bytes =
            Vec::with_capacity(16 + self.records.len() * self.embedding_dim * 4 + CHECKSUM_LEN);
        vec_bytes.extend_from_slice(VEC_MAGIC);
        vec_bytes.extend_from_slice(&(self.embedding_dim as u32).to_le_bytes());
        vec_bytes.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            for v in r.embedding.values() {
                vec_bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = checksum(&meta_bytes, &vec_bytes);
        vec_bytes.extend_from_slice(&digest);

        write_atomic(&dir.join(VEC_FILE), &vec_bytes)?;
        write_atomic(&dir.join(META_FILE), &meta_bytes)
    }

    /// Loads a catalog and checks that every record's image exists.
    pub fn load(dir: &Path) -> Result<Self, CatalogError> {
        let catalog = Self::load_index(dir)?;
        for r in &catalog.records {
            if !dir.join(&r.image_path).is_file() {
                return Err(CatalogError::MissingImage(r.image_path.clone()));
            }
        }
        Ok(catalog)
    }

    /// Loads and verifies the index files without touching images.
    pub fn load_index(dir: &Path) -> Result<Self, CatalogError> {
        let meta_path = dir.join(META_FILE);
        let vec_path = dir.join(VEC_FILE);
        let meta_bytes = fs::read(&meta_path).map_err(io_err(&meta_path))?;
        let vec_bytes = fs::read(&vec_path).map_err(io_err(&vec_path))?;

        let header: serde_json::Value = serde_json::from_slice(&meta_bytes)
            .map_err(|e| CatalogError::CorruptIndex(format!("{META_FILE}: {e}")))?;
        let found = header
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| CatalogError::CorruptIndex("missing format_version".into()))?;
        if found > u64::from(FORMAT_VERSION) {
            return Err(CatalogError::VersionMismatch {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                supported: FORMAT_VERSION,
            });
        }

        if vec_bytes.len() < VEC_MAGIC.len() + 8 + CHECKSUM_LEN {
            return Err(CatalogError::CorruptIndex(format!(
                "{VEC_FILE} is truncated"
            )));
        }
        let (body, stored) = vec_bytes.split_at(vec_bytes.len() - CHECKSUM_LEN);
        if checksum(&meta_bytes, body).as_slice() != stored {
            return Err(CatalogError::CorruptIndex("checksum mismatch".into()));
        }
        if &body[..8] != VEC_MAGIC {
            return Err(CatalogError::CorruptIndex("bad magic".into()));
        }

        let meta: MetaFile = serde_json::from_value(header)
            .map_err(|e| CatalogError::CorruptIndex(format!("{META_FILE}: {e}")))?;
        let dim = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let count = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
        let data = &body[16..];
        if dim != meta.embedding_dim
            || count != meta.records.len()
            || data.len() != dim * count * 4
            || (count > 0 && dim == 0)
        {
            return Err(CatalogError::CorruptIndex(
                "header and metadata disagree".into(),
            ));
        }

        let mut records = Vec::with_capacity(count);
        for (m, chunk) in meta
            .records
            .into_iter()
            .zip(data.chunks_exact((dim * 4).max(1)))
        {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            let embedding = Embedding::from_unit(values)
                .map_err(|e| CatalogError::CorruptIndex(format!("{}: {e}", m.garment_id)))?;
            records.push(GarmentRecord {
                garment_id: m.garment_id,
                category: m.category,
                caption: m.caption,
                image_path: m.image_path,
                embedding,
            });
        }
        let loaded =
            Catalog::new(records).map_err(|e| CatalogError::CorruptIndex(e.to_string()))?;
        Ok(loaded.with_version(meta.catalog_version))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    format_version: u32,
    catalog_version: u64,
    embedding_dim: usize,
    records: Vec<MetaRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRecord {
    garment_id: String,
    category: Category,
    caption: String,
    image_path: String,
}

fn checksum(meta: &[u8], vec_body: &[u8]) -> [u8; CHECKSUM_LEN] {
    let mut h = Sha256::new();
    h.update(meta);
    h.update(vec_body);
    h.finalize().into()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// One line of a captions file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionEntry {
    pub file_name: String,
    pub category: Category,
    pub caption: String,
}

impl CaptionEntry {
    /// The file name without its extension.
    pub fn garment_id(&self) -> &str {
        Path::new(&self.file_name)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&self.file_name)
    }
}

/// Parses `filename<TAB>category<TAB>caption` lines. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_captions(text: &str) -> Result<Vec<CaptionEntry>, CatalogError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fail = |reason: String| CatalogError::CaptionParse {
            line: line_no,
            reason,
        };
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.splitn(3, '\t').collect();
        let [file_name, category, caption] = fields[..] else {
            return Err(fail(
                "expected filename, category and caption separated by tabs".into(),
            ));
        };
        let file_name = file_name.trim();
        if file_name.is_empty() || file_name.contains(['/', '\\']) || file_name.starts_with('.') {
            return Err(fail(format!("invalid file name `{file_name}`")));
        }
        let category = category.parse().map_err(fail)?;
        let caption = caption.trim();
        if caption.is_empty() {
            return Err(fail("caption is empty".into()));
        }
        let entry = CaptionEntry {
            file_name: file_name.to_owned(),
            category,
            caption: caption.to_owned(),
        };
        if !seen.insert(entry.garment_id().to_owned()) {
            return Err(fail(format!(
                "duplicate garment id `{}`",
                entry.garment_id()
            )));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn read_captions(path: &Path) -> Result<Vec<CaptionEntry>, CatalogError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_captions(&text)
}

/// Result of [`ingest`]: the catalog plus where each record's image came
/// from, so [`Ingested::write`] can lay out a self-contained directory.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub catalog: Catalog,
    sources: Vec<PathBuf>,
}

impl Ingested {
    /// Saves the index into `out` and copies each image to `out/images/`.
    pub fn write(&self, out: &Path) -> Result<(), CatalogError> {
        let images = out.join(IMAGE_DIR);
        fs::create_dir_all(&images).map_err(io_err(&images))?;
        for (record, source) in self.catalog.records().iter().zip(&self.sources) {
            let target = out.join(&record.image_path);
            fs::copy(source, &target).map_err(io_err(&target))?;
        }
        self.catalog.save(out)
    }
}

pub fn ingest(
    image_dir: &Path,
    captions_file: &Path,
    embed: &dyn Embedder,
) -> Result<Ingested, CatalogError> {
    ingest_with(image_dir, captions_file, embed, |_, _| {})
}

/// Like [`ingest`], calling `before_embed` with each decoded image first.
/// Mock embedders use this to register captions.
pub fn ingest_with(
    image_dir: &Path,
    captions_file: &Path,
    embed: &dyn Embedder,
    mut before_embed: impl FnMut(&RasterImage, &CaptionEntry),
) -> Result<Ingested, CatalogError> {
    let mut entries = read_captions(captions_file)?;
    entries.sort_by(|a, b| a.garment_id().cmp(b.garment_id()));
    let mut records = Vec::with_capacity(entries.len());
    let mut sources = Vec::with_capacity(entries.len());
    for entry in entries {
        let source = image_dir.join(&entry.file_name);
        let bytes = match fs::read(&source) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CatalogError::MissingImage(entry.file_name.clone()))
            }
            Err(e) => return Err(io_err(&source)(e)),
        };
        let image = decode_png(&bytes).map_err(|source| CatalogError::BadImage {
            name: entry.file_name.clone(),
            source,
        })?;
        before_embed(&image, &entry);
        let embedding = embed.embed_image(&image)?.value;
        tracing::debug!(garment = entry.garment_id(), "embedded garment");
        records.push(GarmentRecord {
            garment_id: entry.garment_id().to_owned(),
            category: entry.category,
            caption: entry.caption.clone(),
            image_path: format!("{IMAGE_DIR}/{}", entry.file_name),
            embedding,
        });
        sources.push(source);
    }
    Ok(Ingested {
        catalog: Catalog::new(records)?,
        sources,
    })
}

/// Top-`k` garments for a text query, best first, ties by id.
pub fn search(
    catalog: &Catalog,
    query_text: &str,
    k: usize,
    embed: &dyn Embedder,
    item_filter: ItemKind,
) -> Result<Vec<(String, MatchScore)>, CatalogError> {
    if catalog.is_empty() {
        return Err(MatchError::EmptyCatalog.into());
    }
    let query = embed.embed_text(query_text)?.value;
    Ok(top_k(&query, catalog, k, item_filter)?)
}

/// Where garment images are read from.
#[derive(Debug, Clone)]
pub enum ImageSource {
    /// Catalog directory; record paths are relative to it.
    Directory(PathBuf),
    InMemory(HashMap<String, RasterImage>),
}

/// A catalog together with access to its garment images. Swapped as a whole
/// on reload.
#[derive(Debug, Clone)]
pub struct CatalogSnapshot {
    catalog: Catalog,
    images: ImageSource,
}

impl CatalogSnapshot {
    pub fn new(catalog: Catalog, images: ImageSource) -> Self {
        Self { catalog, images }
    }

    pub fn empty() -> Self {
        Self::new(Catalog::empty(), ImageSource::InMemory(HashMap::new()))
    }

    pub fn load(dir: &Path) -> Result<Self, CatalogError> {
        Ok(Self::new(
            Catalog::load(dir)?,
            ImageSource::Directory(dir.to_owned()),
        ))
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// The garment's image as RGB.
    pub fn garment_image(&self, garment_id: &str) -> Result<RasterImage, CatalogError> {
        let record = self
            .catalog
            .get(garment_id)
            .ok_or_else(|| CatalogError::UnknownGarment(garment_id.to_owned()))?;
        let image = match &self.images {
            ImageSource::InMemory(map) => map
                .get(garment_id)
                .cloned()
                .ok_or_else(|| CatalogError::MissingImage(record.image_path.clone()))?,
            ImageSource::Directory(dir) => {
                let path = dir.join(&record.image_path);
                let bytes = fs::read(&path).map_err(|e| match e.kind() {
                    io::ErrorKind::NotFound => {
                        CatalogError::MissingImage(record.image_path.clone())
                    }
                    _ => io_err(&path)(e),
                })?;
                decode_png(&bytes).map_err(|source| CatalogError::BadImage {
                    name: record.image_path.clone(),
                    source,
                })?
            }
        };
        Ok(image.to_rgb())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::MockEmbedder;
    use crate::fixtures;
    use crate::imaging::encode_png;
    use crate::matching::{best_match, normalize};

    fn rec(id: &str, cat: Category, v: &[f32]) -> GarmentRecord {
        GarmentRecord {
            garment_id: id.into(),
            category: cat,
            caption: format!("caption {id}"),
            image_path: format!("images/{id}.png"),
            embedding: normalize(v).unwrap(),
        }
    }

    #[test]
    fn new_sorts_and_rejects_duplicates() {
        let c = Catalog::new(vec![
            rec("b", Category::Top, &[1.0, 0.0]),
            rec("a", Category::Dress, &[0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(c.records()[0].garment_id, "a");
        assert_eq!(c.get("b").unwrap().category, Category::Top);
        assert!(c.get("z").is_none());
        assert!(matches!(
            Catalog::new(vec![
                rec("a", Category::Top, &[1.0]),
                rec("a", Category::Top, &[1.0])
            ]),
            Err(CatalogError::DuplicateId(_))
        ));
        assert!(matches!(
            Catalog::new(vec![
                rec("a", Category::Top, &[1.0]),
                rec("b", Category::Top, &[1.0, 0.0])
            ]),
            Err(CatalogError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn captions_parsing() {
        let entries =
            parse_captions("# header\n\na.png\ttop\tred shirt\nb.png\tDRESS\tlong dress\n")
                .unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].category, Category::Dress);
        assert_eq!(entries[0].garment_id(), "a");
        let err = parse_captions("a.png\ttop\tx\nb.png top y\n").unwrap_err();
        assert!(matches!(err, CatalogError::CaptionParse { line: 2, .. }));
        assert!(matches!(
            parse_captions("a.png\tshoe\tx\n"),
            Err(CatalogError::CaptionParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_captions("../a.png\ttop\tx\n"),
            Err(CatalogError::CaptionParse { .. })
        ));
        assert!(matches!(
            parse_captions("a.png\ttop\tx\na.jpg\ttop\ty\n"),
            Err(CatalogError::CaptionParse { line: 2, .. })
        ));
    }

    fn write_fixture_images(dir: &Path, count: usize) -> PathBuf {
        let captions = dir.join("captions.tsv");
        let mut tsv = String::new();
        for g in fixtures::garments().into_iter().take(count) {
            fs::write(dir.join(g.file_name()), encode_png(&g.image)).unwrap();
            tsv.push_str(&format!(
                "{}\t{}\t{}\n",
                g.file_name(),
                g.category,
                g.caption
            ));
        }
        fs::write(&captions, tsv).unwrap();
        captions
    }

    #[test]
    fn ingest_three_is_unit_norm_and_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let captions = write_fixture_images(tmp.path(), 3);
        let embed = MockEmbedder::new();
        let a = ingest(tmp.path(), &captions, &embed).unwrap();
        assert_eq!(a.catalog.len(), 3);
        for r in a.catalog.records() {
            assert!((r.embedding.norm() - 1.0).abs() < 1e-5);
        }
        let (out1, out2) = (tmp.path().join("o1"), tmp.path().join("o2"));
        a.write(&out1).unwrap();
        ingest(tmp.path(), &captions, &embed)
            .unwrap()
            .write(&out2)
            .unwrap();
        for f in [META_FILE, VEC_FILE] {
            assert_eq!(
                fs::read(out1.join(f)).unwrap(),
                fs::read(out2.join(f)).unwrap()
            );
        }
        let loaded = CatalogSnapshot::load(&out1).unwrap();
        assert_eq!(loaded.catalog(), &a.catalog);
        let id = &a.catalog.records()[0].garment_id;
        assert_eq!(loaded.garment_image(id).unwrap().dims(), (48, 64));
    }

    #[test]
    fn ingest_missing_image() {
        let tmp = tempfile::tempdir().unwrap();
        let captions = write_fixture_images(tmp.path(), 2);
        let mut tsv = fs::read_to_string(&captions).unwrap();
        tsv.push_str("ghost.png\ttop\tghost shirt\n");
        fs::write(&captions, tsv).unwrap();
        let err = ingest(tmp.path(), &captions, &MockEmbedder::new()).unwrap_err();
        assert!(matches!(err, CatalogError::MissingImage(n) if n == "ghost.png"));
    }

    #[test]
    fn load_rejects_future_version_and_damage() {
        let tmp = tempfile::tempdir().unwrap();
        let c = Catalog::new(vec![rec("a", Category::Top, &[1.0, 2.0])]).unwrap();
        c.save(tmp.path()).unwrap();
        assert_eq!(Catalog::load_index(tmp.path()).unwrap(), c);
        // Image missing on full load.
        assert!(matches!(
            Catalog::load(tmp.path()),
            Err(CatalogError::MissingImage(_))
        ));

        let meta_path = tmp.path().join(META_FILE);
        let meta = fs::read_to_string(&meta_path).unwrap();
        fs::write(
            &meta_path,
            meta.replace("\"format_version\": 1", "\"format_version\": 9"),
        )
        .unwrap();
        assert!(matches!(
            Catalog::load_index(tmp.path()),
            Err(CatalogError::VersionMismatch { found: 9, .. })
        ));
        fs::write(&meta_path, meta.replace("caption a", "caption b")).unwrap();
        assert!(matches!(
            Catalog::load_index(tmp.path()),
            Err(CatalogError::CorruptIndex(_))
        ));
        fs::write(&meta_path, &meta[..meta.len() / 2]).unwrap();
        assert!(matches!(
            Catalog::load_index(tmp.path()),
            Err(CatalogError::CorruptIndex(_))
        ));
    }

    #[test]
    fn search_ranks_caption_first_and_agrees_with_best_match() {
        let embed = MockEmbedder::with_fixture_tags();
        let snap = fixtures::catalog_snapshot(&embed).unwrap();
        let catalog = snap.catalog();
        for g in fixtures::garments() {
            let ranked = search(catalog, g.caption, 100, &embed, ItemKind::Unspecified).unwrap();
            assert_eq!(ranked.len(), catalog.len());
            assert_eq!(ranked[0].0, g.garment_id, "query `{}`", g.caption);
            assert!(ranked.windows(2).all(|w| w[0].1.value() >= w[1].1.value()));
            let q = embed.embed_text(g.caption).unwrap().value;
            let best = best_match(&q, catalog, ItemKind::Unspecified).unwrap();
            assert_eq!(best.garment_id, ranked[0].0);
        }
        assert!(matches!(
            search(&Catalog::empty(), "x", 1, &embed, ItemKind::Unspecified),
            Err(CatalogError::Match(MatchError::EmptyCatalog))
        ));
    }
}
