use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hwr_core::features::{extract_features, FeatureConfig};
use hwr_core::hmm::{forward, viterbi, ClassHmm, DiagonalGaussian, HmmState, ModelSet};
use hwr_core::oracle::{sample_sequence, synthetic_corpus};
use hwr_core::{GaussianMixture, Lexicon, Recognizer};

/// Deterministic class model: state means step along the diagonal.
fn class(id: &str, offset: f64, n_states: usize, dim: usize, g: usize) -> ClassHmm {
    let states = (0..n_states)
        .map(|s| {
            let comps = (0..g)
                .map(|k| {
                    let mean = (0..dim)
                        .map(|d| offset + s as f64 + 0.1 * k as f64 + 0.01 * d as f64)
                        .collect();
                    DiagonalGaussian::new(mean, vec![1.0; dim])
                })
                .collect();
            let mix = GaussianMixture::new(vec![1.0 / g as f64; g], comps).unwrap();
            HmmState::new(mix, 0.8).unwrap()
        })
        .collect();
    ClassHmm::new(id, states).unwrap()
}

fn features(c: &mut Criterion) {
    let corpus = synthetic_corpus(4, -1..=3, 0);
    let images: Vec<_> = corpus.dataset.samples().map(|s| s.image.clone()).collect();
    let mut group = c.benchmark_group("features");
    for (w, stride) in [(8, 1), (4, 2)] {
        let cfg = FeatureConfig {
            window_width: w,
            stride,
            ..FeatureConfig::default()
        };
        group.bench_with_input(
            BenchmarkId::new("extract", format!("w{w}-s{stride}")),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    for img in &images {
                        black_box(extract_features(img, cfg).unwrap());
                    }
                })
            },
        );
    }
    group.finish();
}

fn lattice(c: &mut Criterion) {
    let dim = 40;
    let models: ModelSet = [class("a", 0.0, 10, dim, 4), class("b", 2.0, 10, dim, 4)]
        .into_iter()
        .collect();
    let composite = models.composite(&["a", "b"]).unwrap();
    let (obs, _) = sample_sequence(&composite, 7);
    let mut group = c.benchmark_group("lattice");
    group.bench_function(format!("forward-T{}", obs.len()), |b| {
        b.iter(|| black_box(forward(&composite, &obs).unwrap()))
    });
    group.bench_function(format!("viterbi-T{}", obs.len()), |b| {
        b.iter(|| black_box(viterbi(&composite, &obs).unwrap()))
    });
    group.finish();
}

fn recognize(c: &mut Criterion) {
    let dim = 40;
    let bases: Vec<String> = (0..20).map(|i| format!("base{i}")).collect();
    let mods: Vec<String> = (0..4).map(|i| format!("mod{i}")).collect();
    let models: ModelSet = bases
        .iter()
        .chain(&mods)
        .enumerate()
        .map(|(i, id)| class(id, 0.3 * i as f64, 10, dim, 2))
        .collect();
    let mut lexicon = Lexicon::default();
    for b in &bases {
        lexicon.insert(b.clone(), vec![b.clone()]);
        for m in &mods {
            lexicon.insert(format!("{b}+{m}"), vec![b.clone(), m.clone()]);
        }
    }
    let rec = Recognizer::new(&models, &lexicon).unwrap();
    let (obs, _) = sample_sequence(&models.composite(&["base3", "mod1"]).unwrap(), 11);
    c.bench_function(&format!("recognize-{}-entries", lexicon.len()), |b| {
        b.iter(|| black_box(rec.recognize(&obs, 5).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = features, lattice, recognize
}
criterion_main!(benches);
