//! Procedural fixtures: a person photo with its parse map, and a small
//! in-shop garment catalog. Everything is generated from code, so runs on
//! the mock stack are reproducible byte-for-byte.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::backends::{BackendError, Embedder};
use crate::catalog::{Catalog, CatalogSnapshot, Category, GarmentRecord, ImageSource};
use crate::imaging::{encode_png, Label, ParseMap, RasterImage};

pub const PERSON_WIDTH: u32 = 96;
pub const PERSON_HEIGHT: u32 = 128;
pub const GARMENT_WIDTH: u32 = 48;
pub const GARMENT_HEIGHT: u32 = 64;

/// Body proportions as fractions of image width/height. `*_half` values are
/// half-widths measured from the vertical centre line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyLayout {
    pub hair_top: f64,
    pub face_top: f64,
    pub head_half: f64,
    pub shoulders: f64,
    pub waist: f64,
    pub torso_half: f64,
    pub arm_half: f64,
    pub hip_half: f64,
    pub crotch: f64,
    pub knee_line: f64,
    pub ankle: f64,
    pub leg_half: f64,
    pub dress: bool,
}

impl BodyLayout {
    /// Centred layout used for any image the mocks do not recognise.
    pub fn standard() -> Self {
        Self {
            hair_top: 0.02,
            face_top: 0.06,
            head_half: 0.08,
            shoulders: 0.17,
            waist: 0.50,
            torso_half: 0.16,
            arm_half: 0.22,
            hip_half: 0.14,
            crotch: 0.60,
            knee_line: 0.80,
            ankle: 0.92,
            leg_half: 0.11,
            dress: false,
        }
    }

    /// The shipped fixture person: slightly broader, longer torso.
    pub fn fixture() -> Self {
        Self {
            hair_top: 0.03,
            face_top: 0.07,
            head_half: 0.085,
            shoulders: 0.18,
            waist: 0.52,
            torso_half: 0.17,
            arm_half: 0.24,
            hip_half: 0.15,
            crotch: 0.62,
            knee_line: 0.82,
            ankle: 0.93,
            leg_half: 0.12,
            dress: false,
        }
    }

    pub fn label_at(&self, u: f64, v: f64) -> Label {
        let dx = (u - 0.5).abs();
        let l = self;
        if v >= l.hair_top && v < l.face_top + 0.02 && dx < l.head_half {
            return Label::Hair;
        }
        if v >= l.face_top && v < l.shoulders && dx < l.head_half * 0.75 {
            return Label::Face;
        }
        if v >= l.shoulders && v < l.waist {
            if dx < l.torso_half {
                return if l.dress {
                    Label::Dress
                } else {
                    Label::UpperClothes
                };
            }
            if dx < l.arm_half && v >= l.shoulders + 0.01 {
                return Label::Arms;
            }
        }
        if v >= l.waist && v < l.knee_line && dx < l.hip_half {
            if v >= l.crotch && dx < 0.015 && !l.dress {
                return Label::Background;
            }
            return if l.dress {
                Label::Dress
            } else {
                Label::LowerClothes
            };
        }
        if v >= l.knee_line && v < l.ankle && dx >= 0.02 && dx < l.leg_half {
            return Label::Legs;
        }
        if v >= l.ankle && v < l.ankle + 0.04 && dx >= 0.02 && dx < l.leg_half + 0.01 {
            return Label::Shoes;
        }
        Label::Background
    }

    pub fn parse_map(&self, width: u32, height: u32) -> ParseMap {
        ParseMap::from_fn(width, height, |x, y| {
            let u = (f64::from(x) + 0.5) / f64::from(width);
            let v = (f64::from(y) + 0.5) / f64::from(height);
            self.label_at(u, v)
        })
    }
}

fn label_colour(label: Label) -> [u8; 3] {
    match label {
        Label::Background => [236, 236, 242],
        Label::Hair => [58, 40, 30],
        Label::Face | Label::Arms | Label::Legs => [226, 176, 142],
        Label::UpperClothes => [40, 52, 120],
        Label::LowerClothes => [190, 168, 118],
        Label::Dress => [150, 40, 90],
        Label::Shoes => [30, 30, 30],
        Label::Other => [90, 160, 90],
    }
}

fn shade(base: [u8; 3], x: u32, y: u32) -> [u8; 3] {
    let jitter = ((x * 3 + y * 5) % 9) as i16 - 4;
    base.map(|c| (i16::from(c) + jitter).clamp(0, 255) as u8)
}

/// Renders a parse map as a lightly textured photo.
pub fn render_person(parse: &ParseMap) -> RasterImage {
    RasterImage::from_fn_rgb(parse.width(), parse.height(), |x, y| {
        shade(label_colour(parse.get(x, y)), x, y)
    })
}

pub fn person_parse_map() -> ParseMap {
    BodyLayout::fixture().parse_map(PERSON_WIDTH, PERSON_HEIGHT)
}

pub fn person_image() -> RasterImage {
    render_person(&person_parse_map())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Plain,
    Floral,
    Striped,
    Denim,
    Pleated,
}

fn swatch(base: [u8; 3], pattern: Pattern) -> RasterImage {
    RasterImage::from_fn_rgb(GARMENT_WIDTH, GARMENT_HEIGHT, |x, y| {
        let accent = match pattern {
            Pattern::Plain => false,
            Pattern::Floral => {
                let (cx, cy) = (x % 12, y % 12);
                let (dx, dy) = (cx as i32 - 6, cy as i32 - 6);
                dx * dx + dy * dy <= 4
            }
            Pattern::Striped => (y / 4) % 2 == 1,
            Pattern::Denim => (x + 2 * y) % 7 == 0,
            Pattern::Pleated => x % 8 == 0,
        };
        match (pattern, accent) {
            (_, false) => shade(base, x, y),
            (Pattern::Floral | Pattern::Striped, true) => [245, 245, 245],
            (_, true) => base.map(|c| c / 2),
        }
    })
}

#[derive(Debug, Clone)]
pub struct FixtureGarment {
    pub garment_id: &'static str,
    pub category: Category,
    pub caption: &'static str,
    pub image: RasterImage,
}

impl FixtureGarment {
    pub fn file_name(&self) -> String {
        format!("{}.png", self.garment_id)
    }
}

/// The in-shop fixture garments, sorted by id.
pub fn garments() -> Vec<FixtureGarment> {
    let g = |garment_id, category, caption, base, pattern| FixtureGarment {
        garment_id,
        category,
        caption,
        image: swatch(base, pattern),
    };
    vec![
        g(
            "bottom_black_pleated_skirt",
            Category::Bottom,
            "black pleated skirt",
            [20, 20, 24],
            Pattern::Pleated,
        ),
        g(
            "bottom_blue_denim_jeans",
            Category::Bottom,
            "blue denim jeans",
            [60, 100, 210],
            Pattern::Denim,
        ),
        g(
            "bottom_khaki_chinos",
            Category::Bottom,
            "khaki chino trousers",
            [190, 168, 118],
            Pattern::Plain,
        ),
        g(
            "dress_black_evening",
            Category::Dress,
            "black evening dress",
            [20, 20, 24],
            Pattern::Plain,
        ),
        g(
            "dress_blue_summer",
            Category::Dress,
            "blue summer dress",
            [60, 100, 210],
            Pattern::Floral,
        ),
        g(
            "top_green_striped_shirt",
            Category::Top,
            "green striped shirt",
            [40, 140, 60],
            Pattern::Striped,
        ),
        g(
            "top_red_floral",
            Category::Top,
            "red floral top",
            [200, 30, 40],
            Pattern::Floral,
        ),
        g(
            "top_white_cotton_tee",
            Category::Top,
            "white cotton t-shirt",
            [245, 245, 245],
            Pattern::Plain,
        ),
    ]
}

/// Captions file contents for [`garments`]: `filename<TAB>category<TAB>caption`.
pub fn captions_tsv() -> String {
    let mut out = String::from("# filename\tcategory\tcaption\n");
    for g in garments() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            g.file_name(),
            g.category.as_str(),
            g.caption
        ));
    }
    out
}

/// In-memory catalog over the fixture garments, embedded with `embedder`.
pub fn catalog_snapshot(embedder: &dyn Embedder) -> Result<CatalogSnapshot, BackendError> {
    let mut records = Vec::new();
    let mut images = HashMap::new();
    for g in garments() {
        let embedding = embedder.embed_image(&g.image)?.value;
        records.push(GarmentRecord {
            garment_id: g.garment_id.to_owned(),
            category: g.category,
            caption: g.caption.to_owned(),
            image_path: format!("images/{}", g.file_name()),
            embedding,
        });
        images.insert(g.garment_id.to_owned(), g.image);
    }
    let catalog = Catalog::new(records).expect("fixture ids are unique and share a dimension");
    Ok(CatalogSnapshot::new(catalog, ImageSource::InMemory(images)))
}

/// Writes `person.png`, `garments/*.png` and `captions.tsv` under `dir`, a
/// ready-made input for catalog ingest and one-shot edits.
pub fn write_demo_files(dir: &Path) -> io::Result<()> {
    let garment_dir = dir.join("garments");
    fs::create_dir_all(&garment_dir)?;
    fs::write(dir.join("person.png"), encode_png(&person_image()))?;
    for g in garments() {
        fs::write(garment_dir.join(g.file_name()), encode_png(&g.image))?;
    }
    fs::write(dir.join("captions.tsv"), captions_tsv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{bounding_box, DEFAULT_FILL};

    #[test]
    fn fixture_person_has_every_body_region() {
        let parse = person_parse_map();
        for label in [
            Label::Hair,
            Label::Face,
            Label::UpperClothes,
            Label::LowerClothes,
            Label::Arms,
            Label::Legs,
            Label::Shoes,
        ] {
            assert!(!parse.region(&[label]).is_empty(), "{label:?}");
        }
        assert!(parse.region(&[Label::Dress]).is_empty());
    }

    #[test]
    fn layouts_differ_and_are_centred() {
        let a = BodyLayout::standard().parse_map(PERSON_WIDTH, PERSON_HEIGHT);
        assert_ne!(a, person_parse_map());
        let upper = bounding_box(&a.region(&[Label::UpperClothes])).unwrap();
        let left = upper.x;
        let right = PERSON_WIDTH - (upper.x + upper.width);
        assert!(left.abs_diff(right) <= 1);
    }

    #[test]
    fn person_never_contains_the_fill_colour() {
        let img = person_image();
        for y in 0..img.height() {
            for x in 0..img.width() {
                assert_ne!(img.pixel(x, y), [DEFAULT_FILL; 3]);
            }
        }
    }

    #[test]
    fn garments_sorted_and_unique() {
        let g = garments();
        assert!(g.windows(2).all(|w| w[0].garment_id < w[1].garment_id));
        let tsv = captions_tsv();
        assert_eq!(tsv.lines().count(), g.len() + 1);
    }
}
