mod common;

use std::path::PathBuf;

use ooc_core::checkpoint::{load_params, save_params, Checkpoint};
use ooc_core::infer::DecodeTrace;
use ooc_core::{
    chunk, decode, decode_batch, generate_dataset, init_params, render_report, score, train, ChunkLexicon,
    DecodeConfig, DecodeResult, Instance, Label, PhraseSet, ReportFormat, RunConfig, SynthConfig, TrainConfig,
};

const FIGURE_CAPTION: &str =
    "Tunisian and Angolan players fight for the ball on Sunday during a handball tournament in Spain";

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn tiny() -> Vec<Instance> {
    let cfg = SynthConfig { d: 8, n_train: 64, n_val: 1, n_test: 16, ..SynthConfig::default() };
    generate_dataset(&cfg).unwrap().train
}

#[test]
fn figure_caption_chunks_to_golden_phrases() {
    let set = chunk(FIGURE_CAPTION, &ChunkLexicon::bundled()).unwrap();
    let want: PhraseSet = serde_json::from_str(&std::fs::read_to_string(golden("figure1_phrases.json")).unwrap()).unwrap();
    assert_eq!(set, want);
}

fn figure_instance() -> (Instance, DecodeResult) {
    let mut rng = common::rng(42);
    let set = chunk(FIGURE_CAPTION, &ChunkLexicon::bundled()).unwrap();
    let mut inst = common::instance(&mut rng, "figure-1", 4, set.len(), Label::Falsified);
    inst.caption = FIGURE_CAPTION.into();
    inst.phrase_set = set;
    inst.validate().unwrap();
    let mut z_hat = vec![Label::Pristine; inst.n_phrases()];
    z_hat[0] = Label::Falsified;
    let result = DecodeResult {
        id: inst.id.clone(),
        y_hat: Label::Falsified,
        y_prob: 0.12,
        z_probs: vec![0.08, 0.93, 0.95, 0.97, 0.91, 0.94],
        z_hat,
        n_iters: 3,
        converged: true,
        trace: DecodeTrace::default(),
    };
    (inst, result)
}

#[test]
fn subject_culprit_report_matches_golden() {
    let (inst, result) = figure_instance();
    let md = render_report(&inst, &result, ReportFormat::Markdown).unwrap();
    assert_eq!(md, std::fs::read_to_string(golden("figure1_report.md")).unwrap());
    assert!(md.contains("> <mark>Tunisian and Angolan players</mark> fight for the ball"));
    let html = render_report(&inst, &result, ReportFormat::Html).unwrap();
    assert!(html.contains("<blockquote><mark class=\"culprit\">Tunisian and Angolan players</mark> fight"));

    let mut other = result.clone();
    other.id = "someone-else".into();
    assert!(render_report(&inst, &other, ReportFormat::Markdown).is_err());
}

/// p_head emits constant logits (ln 9, 0), so p(Pristine) = 0.9 whatever z is.
fn constant_predictor(seed: u64) -> ooc_core::model::ModelParams {
    let mut params = common::params(seed, 4, 3, 6);
    params.p_head.w2.iter_mut().for_each(|w| *w = 0.0);
    params.p_head.b2 = vec![9f64.ln(), 0.0];
    params
}

#[test]
fn constant_predictor_converges_on_the_second_pass() {
    let mut rng = common::rng(7);
    let inst = common::instance(&mut rng, "const", 4, 5, Label::Pristine);
    let params = constant_predictor(3);
    let mut seen_two = false;
    for seed in 0..40 {
        let cfg = DecodeConfig { seed, ..DecodeConfig::default() };
        let r = decode(&params, &inst, &cfg).unwrap();
        let y = r.trace.iterations[0].y.p_true();
        assert!((y - 0.9).abs() < 1e-12);
        assert_eq!(r.y_hat, Label::Pristine);
        let hard = |z: &[ooc_core::VeracityDist]| -> Vec<Label> { z[..5].iter().map(|d| d.threshold(0.5)).collect() };
        let first_changed = hard(&r.trace.initial_z) != hard(&r.trace.iterations[0].z);
        assert!(r.converged);
        assert_eq!(r.n_iters, if first_changed { 2 } else { 1 });
        seen_two |= first_changed;

        let one = decode(&params, &inst, &DecodeConfig { max_iters: 1, seed, ..DecodeConfig::default() }).unwrap();
        assert_eq!(one.n_iters, 1);
        assert_eq!(one.converged, !first_changed);
        assert_eq!(one.z_hat, r.z_hat);
    }
    assert!(seen_two, "no seed produced a first-pass label change");
}

#[test]
fn batch_decoding_is_order_free_and_matches_single() {
    let data = tiny();
    let params = init_params(5, 8, 6, 8).unwrap();
    let cfg = DecodeConfig::default();
    let forward = decode_batch(&params, &data, &cfg).unwrap();
    let mut reversed_input = data.clone();
    reversed_input.reverse();
    let mut backward = decode_batch(&params, &reversed_input, &cfg).unwrap();
    backward.reverse();
    assert_eq!(forward, backward);
    assert_eq!(decode_batch(&params, &data[3..4], &cfg).unwrap()[0], decode(&params, &data[3], &cfg).unwrap());

    let twins = vec![data[0].clone(), data[0].clone()];
    let both = decode_batch(&params, &twins, &cfg).unwrap();
    assert_eq!(both[0], both[1]);
    assert!(decode_batch(&params, &[], &cfg).unwrap().is_empty());
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let data = tiny();
    let (params, _) = train(&init_params(1, 8, 6, 8).unwrap(), &data, &TrainConfig { epochs: 1, ..TrainConfig::default() })
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_params(&params, &path).unwrap();
    let back = load_params(&path).unwrap();
    assert_eq!(back, params);
    for (a, b) in back.tensors().iter().zip(params.tensors()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.checksum(), params.checksum());
    let first = std::fs::read(&path).unwrap();
    save_params(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let mut ckpt = Checkpoint::from_params(&params);
    ckpt.tensors.get_mut("p.b2").unwrap().data.pop();
    assert!(ckpt.into_params().is_err());
    assert!(load_params(dir.path().join("absent.json")).unwrap_err().is_io());
}

#[test]
fn training_is_a_pure_function_of_its_inputs() {
    let data = tiny();
    let init = init_params(2, 8, 6, 8).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 16, ..TrainConfig::default() };
    let (a, ra) = train(&init, &data, &cfg).unwrap();
    let (b, rb) = train(&init, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(ra.same_outcome(&rb));
    assert_eq!(ra.l_final.len(), 2);
    assert_ne!(a, init);

    let (c, _) = train(&init, &data, &TrainConfig { seed: 1, ..cfg.clone() }).unwrap();
    assert_ne!(a, c, "shuffle seed should matter");

    let (frozen, _) = train(&init, &data, &TrainConfig { lr: 0.0, ..cfg.clone() }).unwrap();
    assert_eq!(frozen, init);

    let (detached, _) = train(&init, &data, &TrainConfig { detach_teacher: true, ..cfg.clone() }).unwrap();
    assert_ne!(detached, a);
    assert!(train(&init, &[], &cfg).is_err());
    assert!(train(&init, &data, &TrainConfig { lambda: -0.1, ..cfg }).is_err());
}

fn forced(inst: &Instance, y: Label, z: Vec<Label>) -> DecodeResult {
    DecodeResult {
        id: inst.id.clone(),
        y_hat: y,
        y_prob: if y == Label::Pristine { 0.9 } else { 0.1 },
        z_probs: z.iter().map(|l| if l.is_falsified() { 0.1 } else { 0.9 }).collect(),
        z_hat: z,
        n_iters: 2,
        converged: true,
        trace: DecodeTrace::default(),
    }
}

#[test]
fn metric_arithmetic() {
    let cfg = SynthConfig { d: 8, n_train: 1, n_val: 1, n_test: 40, ..SynthConfig::default() };
    let test = generate_dataset(&cfg).unwrap().test;
    let gold = |i: &Instance| i.gold_phrase_labels.clone().unwrap();

    let perfect: Vec<_> = test.iter().map(|i| forced(i, i.label, gold(i))).collect();
    let m = score(&test, &perfect).unwrap();
    assert_eq!(m.caption_accuracy, 1.0);
    assert_eq!(m.caption_f1, 1.0);
    let phrase = m.phrase.unwrap();
    assert_eq!((phrase.precision, phrase.recall, phrase.f1), (1.0, 1.0, 1.0));
    assert_eq!(m.logic_consistency_rate, 1.0);
    assert_eq!(m.mean_iterations, 2.0);

    let lazy: Vec<_> = test.iter().map(|i| forced(i, Label::Pristine, vec![Label::Pristine; i.n_phrases()])).collect();
    let m = score(&test, &lazy).unwrap();
    assert_eq!(m.caption_accuracy, 0.5);
    assert_eq!((m.caption_precision, m.caption_recall, m.caption_f1), (0.0, 0.0, 0.0));
    assert_eq!(m.phrase.unwrap().recall, 0.0);
    assert_eq!(m.logic_consistency_rate, 1.0);

    // Falsified verdict with every phrase pristine violates the rule.
    let inconsistent: Vec<_> = test.iter().map(|i| forced(i, Label::Falsified, vec![Label::Pristine; i.n_phrases()])).collect();
    assert_eq!(score(&test, &inconsistent).unwrap().logic_consistency_rate, 0.0);

    let mut shuffled = perfect.clone();
    shuffled.swap(0, 1);
    assert!(score(&test, &shuffled).is_err());
    assert!(score(&test, &perfect[1..]).is_err());
}

#[test]
fn bundled_default_config_matches_code_defaults() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    assert_eq!(RunConfig::load(path).unwrap(), RunConfig::default());
    assert!(RunConfig::from_json("{}").unwrap() == RunConfig::default());
    let seeded = RunConfig::default().with_seed(9);
    assert_eq!((seeded.synth.seed, seeded.model.seed, seeded.train.seed, seeded.decode.seed), (9, 9, 9, 9));
}
