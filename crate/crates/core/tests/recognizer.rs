use hwr_core::hmm::{ClassHmm, DiagonalGaussian, GaussianMixture, HmmState, ModelSet};
use hwr_core::oracle::{enumerate_paths, sample_sequence, OracleError};
use hwr_core::recognizer::{Lexicon, RecognizeError, Recognizer};
use hwr_core::FeatureSequence;

const DIM: usize = 6;

/// Three states, each with a mean three units out along its own axis.
fn class(id: &str, first_axis: usize) -> ClassHmm {
    let states = (0..3)
        .map(|s| {
            let mut mean = vec![0.0; DIM];
            mean[first_axis + s] = 3.0;
            HmmState::new(
                GaussianMixture::single(DiagonalGaussian::new(mean, vec![1.0; DIM])),
                0.5,
            )
            .unwrap()
        })
        .collect();
    ClassHmm::new(id, states).unwrap()
}

fn setup() -> (ModelSet, Lexicon) {
    let models: ModelSet = [class("A", 0), class("B", 3)].into_iter().collect();
    let mut lexicon = Lexicon::default();
    lexicon.insert("A", vec!["A".into()]);
    lexicon.insert("B", vec!["B".into()]);
    lexicon.insert("AB", vec!["A".into(), "B".into()]);
    (models, lexicon)
}

#[test]
fn decoding_agrees_with_exhaustive_search() {
    let (models, lexicon) = setup();
    let rec = Recognizer::new(&models, &lexicon).unwrap();
    let truths = ["A", "B", "AB"];
    let (mut correct, mut checked) = (0, 0);
    for trial in 0..200u64 {
        let truth = truths[trial as usize % 3];
        let composite = models.composite(&lexicon.entries()[truth]).unwrap();
        let (obs, _) = sample_sequence(&composite, 500 + trial);
        let result = rec.recognize(&obs, 3).unwrap();
        correct += usize::from(result.character_id == truth);

        // brute force: best single path of every entry, ties to the smaller id
        let mut best: Option<(String, f64, Vec<usize>)> = None;
        let mut too_large = false;
        for (ch, classes) in lexicon.entries() {
            let model = models.composite(classes).unwrap();
            match enumerate_paths(&model, &obs) {
                Ok(e) if e.log_max.is_finite() => {
                    if best.as_ref().is_none_or(|b| e.log_max > b.1) {
                        best = Some((ch.clone(), e.log_max, e.argmax));
                    }
                }
                Ok(_) => {}
                Err(OracleError::TooLarge(_)) => too_large = true,
                Err(e) => panic!("{e}"),
            }
        }
        if too_large {
            continue;
        }
        checked += 1;
        let (ch, score, path) = best.unwrap();
        assert_eq!(result.character_id, ch, "trial {trial}");
        assert!((result.log_likelihood - score).abs() <= 1e-9 * score.abs());
        let expected: Vec<usize> = (1..path.len())
            .filter(|&t| path[t] == 3 && path[t - 1] == 2)
            .collect();
        if lexicon.entries()[&ch].len() == 2 {
            assert_eq!(result.boundaries, expected, "trial {trial}");
        } else {
            assert!(result.boundaries.is_empty());
        }
        assert_eq!(result.n_best[0].0, result.character_id);
        assert!(result.n_best.windows(2).all(|w| w[0].1 >= w[1].1));
    }
    assert!(
        checked >= 150,
        "only {checked} trials small enough to enumerate"
    );
    assert!(correct >= 190, "accuracy {correct}/200");
}

#[test]
fn sequences_too_short_for_every_entry_are_rejected() {
    let (models, lexicon) = setup();
    let rec = Recognizer::new(&models, &lexicon).unwrap();
    let obs = FeatureSequence::new(DIM, vec![0.0; 2 * DIM], 2);
    assert!(matches!(
        rec.recognize(&obs, 1),
        Err(RecognizeError::AllImpossible { frames: 2 })
    ));
    // four frames fit A and B but not AB
    let obs = FeatureSequence::new(DIM, vec![0.0; 4 * DIM], 4);
    let scores = rec.score_all(&obs).unwrap();
    assert_eq!(scores["AB"], f64::NEG_INFINITY);
    assert!(scores["A"].is_finite() && scores["B"].is_finite());
}

#[test]
fn unknown_classes_are_reported() {
    let (models, _) = setup();
    let mut lexicon = Lexicon::default();
    lexicon.insert("AC", vec!["A".into(), "C".into()]);
    assert!(matches!(
        Recognizer::new(&models, &lexicon),
        Err(RecognizeError::UnknownClass { class, .. }) if class == "C"
    ));
}
