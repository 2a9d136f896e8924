use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use outfitter_core::imaging::ssim;
use outfitter_core::matching::normalize;
use outfitter_core::{
    best_match, fixtures, parse_invocation, Backends, Catalog, Category, Embedding, GarmentRecord,
    ItemKind, Orchestrator, PipelineConfig, PromptTemplate, RasterImage, Session,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_embedding(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let raw: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&raw).expect("nonzero")
}

fn random_catalog(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Catalog {
    let records = (0..n)
        .map(|i| GarmentRecord {
            garment_id: format!("g{i:06}"),
            category: Category::ALL[i % Category::ALL.len()],
            caption: String::new(),
            image_path: format!("images/g{i:06}.png"),
            embedding: random_embedding(rng, dim),
        })
        .collect();
    Catalog::new(records).expect("valid catalog")
}

fn bench_best_match(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("best_match");
    for n in [1_000, 10_000] {
        let catalog = random_catalog(&mut rng, n, 512);
        let query = random_embedding(&mut rng, 512);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| best_match(black_box(&query), &catalog, ItemKind::Unspecified).unwrap())
        });
    }
    group.finish();
}

fn bench_ssim(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = RasterImage::from_fn_rgb(256, 256, |_, _| rng.random());
    let b = RasterImage::from_fn_rgb(256, 256, |x, y| {
        let p = a.pixel(x, y);
        [p[0] ^ 3, p[1], p[2]]
    });
    c.bench_function("ssim_256x256", |bench| {
        bench.iter(|| ssim(black_box(&a), &b).unwrap())
    });
}

fn bench_parse(c: &mut Criterion) {
    let clean = r#"{"function":"localized_editing","item":"upper_body","details":"shorter sleeves","reply":"Shortening the sleeves."}"#;
    let noisy = format!(
        "Sure! Here is the call you asked for.\n```json\n{clean}\n```\nLet me know if that works."
    );
    c.bench_function("parse_invocation_clean", |b| {
        b.iter(|| parse_invocation(black_box(clean)).unwrap())
    });
    c.bench_function("parse_invocation_wrapped", |b| {
        b.iter(|| parse_invocation(black_box(&noisy)).unwrap())
    });
}

fn bench_turn(c: &mut Criterion) {
    let backends = Backends::mock();
    let catalog = fixtures::catalog_snapshot(&*backends.embed).expect("fixture catalog");
    let orch = Orchestrator::new(
        PromptTemplate::builtin(),
        backends,
        catalog,
        PipelineConfig::default(),
    );
    let person = fixtures::person_image();
    c.bench_function("mock_pipeline_turn", |b| {
        b.iter(|| {
            let mut session = Session::new("bench");
            orch.handle_message(
                &mut session,
                "change into the red floral top",
                Some(person.clone()),
                Some(7),
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_best_match,
    bench_ssim,
    bench_parse,
    bench_turn
);
criterion_main!(benches);
