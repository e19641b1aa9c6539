//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Run with `cargo test -p viewprune-bench --test acceptance --
//! --nocapture` to see the lines.

mod common;

use viewprune_bench::config::Config;
use viewprune_bench::metrics::{mean_std, per_view_coverage, salient_recall};
use viewprune_bench::runner::{self, probe, probe_with_positions, ExecMode};
use viewprune_bench::scenario::generate_scenario;
use viewprune_bench::strategies;
use viewprune_core::flopcount::{FlopCounter, MatmulClass};
use viewprune_core::flops::{
    dense_flops, modeled_matmul_macs, pruned_flops, reduction_ratio, FlopsArchAssumptions,
    DENSE_TARGET_GFLOPS,
};
use viewprune_core::fusion;
use viewprune_core::layout::SequenceLayout;
use viewprune_core::numerics::{softmax_rows, Matrix2D, Matrix3D};
use viewprune_core::planner::{composite_loss, loss_gradient, LossWeights, Trajectory};
use viewprune_core::pruning::{prune_step, PruneConfig, TextGuidedSparsifier};
use viewprune_core::rng::RngSeed;
use viewprune_core::transformer::{
    attention_forward, model_forward, scoring_weights_from, ArchSpec, ForwardOptions,
    LayerWeights, ModelWeights, WantWeights,
};

fn pass(criterion: u32, details: &str) {
    println!("criterion {criterion:02}: PASS - {details}");
}

/// Small scenario config for the shift-invariance sweep: the properties are
/// scale-free and this keeps 400 probes inside the runtime budget.
fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.scenario.views = 6;
    cfg.scenario.tokens_per_view = 16;
    cfg.scenario.planted_views = 2;
    cfg.scenario.planted_per_view = 5;
    cfg.scenario.text_tokens = 6;
    cfg
}

#[test]
fn criterion_01_flops_reproduction() {
    let a = FlopsArchAssumptions::reference_7b();
    let dense = dense_flops(&a).unwrap();
    let dev = (dense.total_gflops - DENSE_TARGET_GFLOPS).abs() / DENSE_TARGET_GFLOPS;
    assert!(dev <= 0.10, "dense total {} deviates {dev:.3}", dense.total_gflops);

    let prune = |rate| PruneConfig {
        pruning_rate: rate,
        recycle_fraction: 0.10,
        sparse_layers: vec![4],
    };
    let r35 = pruned_flops(&a, &prune(0.35)).unwrap();
    let red35 = 1.0 - reduction_ratio(&dense, &r35);
    assert!(
        (red35 - 0.32).abs() <= 0.08,
        "layer-4/35% reduction {red35:.3} outside 0.32 +/- 0.08"
    );
    let r85 = pruned_flops(&a, &prune(0.85)).unwrap();
    let red85 = 1.0 - reduction_ratio(&dense, &r85);
    assert!(
        (red85 - 0.61).abs() <= 0.08,
        "layer-4/85% reduction {red85:.3} outside 0.61 +/- 0.08"
    );
    pass(
        1,
        &format!(
            "dense {:.0} GFLOPs (target {DENSE_TARGET_GFLOPS}), reductions 35%: {:.1}%, 85%: {:.1}%",
            dense.total_gflops,
            red35 * 100.0,
            red85 * 100.0
        ),
    );
}

#[test]
fn criterion_02_flops_counter_vs_instrumentation() {
    let mut checked = 0u32;
    for (layers, sparse, rate, views, per_view, text) in [
        (5usize, vec![], 0.5f64, 3usize, 6usize, 4usize),
        (5, vec![2], 0.5, 3, 6, 4),
        (6, vec![1, 3], 0.35, 4, 8, 5),
        (4, vec![1], 0.85, 2, 10, 3),
    ] {
        let spec = ArchSpec::new(layers, 16, 4, 32, sparse.clone()).unwrap();
        let prune = (!sparse.is_empty()).then(|| PruneConfig {
            pruning_rate: rate,
            recycle_fraction: 0.10,
            sparse_layers: sparse.clone(),
        });
        let weights = ModelWeights::init(&spec, RngSeed::new(99));
        let layout = SequenceLayout::visual_then_text(views, per_view, text);
        let mut rng = RngSeed::new(100).rng();
        let emb = Matrix2D::randn(layout.len(), 16, 1.0, &mut rng);
        let counter = FlopCounter::new();
        let sparsifier = prune.clone().map(TextGuidedSparsifier::new);
        model_forward(
            &emb,
            &layout,
            &spec,
            &weights,
            sparsifier.as_ref().map(|s| s as &dyn viewprune_core::transformer::Sparsifier),
            ForwardOptions { counter: Some(&counter), ..Default::default() },
        )
        .unwrap();
        let modeled = modeled_matmul_macs(&spec, views * per_view, text, 0, prune.as_ref());
        assert_eq!(counter.macs(MatmulClass::QkvoProj), modeled.qkvo);
        assert_eq!(counter.macs(MatmulClass::AttnScores), modeled.attn_scores);
        assert_eq!(counter.macs(MatmulClass::AttnValues), modeled.attn_values);
        assert_eq!(counter.macs(MatmulClass::Ffn), modeled.ffn);
        assert_eq!(counter.macs(MatmulClass::AnchorSim), modeled.anchor_sim);
        assert_eq!(counter.macs(MatmulClass::PruneScores), modeled.prune_scores);
        checked += 1;
    }
    pass(2, &format!("{checked} configurations, all modeled matmul terms exactly equal"));
}

#[test]
fn criterion_03_position_shift_invariance() {
    // Part 1: over 100 seeded scenarios, the decision (all three index
    // sets) is identical under constant shifts +1, +17, +256.
    let cfg = small_config();
    let master = RngSeed::new(11);
    for i in 0..100 {
        let seed = master.derive_index(i).0;
        let bundle = generate_scenario(seed, &cfg).unwrap();
        let base = probe(&bundle, 0).unwrap().trace.steps[0].decision.clone();
        for offset in [1u64, 17, 256] {
            let d = probe(&bundle, offset).unwrap().trace.steps[0].decision.clone();
            assert_eq!(d.selected, base.selected, "seed {seed} offset {offset}");
            assert_eq!(d.recycled, base.recycled, "seed {seed} offset {offset}");
            assert_eq!(d.retained, base.retained, "seed {seed} offset {offset}");
        }
    }

    // Part 2: the positional baseline differs under a constant shift on a
    // constructed instance. Pruning at layer 0 makes the text-guided path's
    // inputs provably position-free, while the baseline reads the rotated
    // masked matrix; at extreme offsets the f64 rounding of pos * freq
    // perturbs relative angles enough to flip a marginal selection.
    let mut cfg0 = Config::default();
    cfg0.scenario.views = 2;
    cfg0.scenario.tokens_per_view = 16;
    cfg0.scenario.planted_views = 1;
    cfg0.scenario.planted_per_view = 2;
    cfg0.scenario.text_tokens = 3;
    cfg0.scenario.alignment_strength = 0.0;
    cfg0.arch.num_layers = 2;
    cfg0.prune.sparse_layers = vec![0];
    cfg0.prune.rate = 0.5;
    let mut flipped_seed = None;
    for seed in 0..30u64 {
        let bundle = generate_scenario(seed, &cfg0).unwrap();
        let base_out = probe(&bundle, 0).unwrap();
        let base_step = &base_out.trace.steps[0];
        let base_art = base_step.artifacts.as_ref().unwrap();
        let pos_base = strategies::positional(
            &base_art.h_input,
            &base_art.masked_weights,
            &base_art.layout,
            &bundle.prune,
        )
        .unwrap();
        for shift in [1u64 << 52, 1 << 53, 1 << 54] {
            let out = probe(&bundle, shift).unwrap();
            let step = &out.trace.steps[0];
            let art = step.artifacts.as_ref().unwrap();
            // The text-guided decision never moves, even at these offsets.
            assert_eq!(step.decision.retained, base_step.decision.retained);
            assert_eq!(step.decision.selected, base_step.decision.selected);
            assert_eq!(step.decision.recycled, base_step.decision.recycled);
            let pos = strategies::positional(
                &art.h_input,
                &art.masked_weights,
                &art.layout,
                &bundle.prune,
            )
            .unwrap();
            if pos.retained != pos_base.retained && flipped_seed.is_none() {
                flipped_seed = Some((seed, shift));
            }
        }
    }
    let (seed, shift) =
        flipped_seed.expect("no constructed instance flipped the positional baseline");
    pass(
        3,
        &format!(
            "100 scenarios stable under shifts {{1, 17, 256}}; positional baseline flips at \
             seed {seed}, shift 2^{}",
            shift.trailing_zeros()
        ),
    );
}

#[test]
fn criterion_04_budget_exactness_and_disjointness() {
    let rates = [0.35, 0.60, 0.85];
    let rhos = [0.0, 0.1, 0.25];
    // 50 seeds per combination at the pruning-step level.
    let layout = SequenceLayout::visual_then_text(6, 16, 4);
    let len = layout.len();
    let visual = layout.visual_count();
    let mut cases = 0u32;
    for (ri, &rate) in rates.iter().enumerate() {
        for (pi, &rho) in rhos.iter().enumerate() {
            let cfg = PruneConfig {
                pruning_rate: rate,
                recycle_fraction: rho,
                sparse_layers: vec![0],
            };
            let expected = cfg.budget(visual);
            for seed in 0..50u64 {
                let mut rng =
                    RngSeed::new(seed ^ ((ri as u64) << 32) ^ ((pi as u64) << 40)).rng();
                let h = Matrix2D::randn(len, 16, 1.0, &mut rng);
                let logits = Matrix2D::randn(len, len, 1.0, &mut rng);
                let scoring = softmax_rows(&logits).unwrap();
                let d = prune_step(&h, &scoring, &layout, &cfg).unwrap();
                assert_eq!(d.retained.len(), expected.total, "rate {rate} rho {rho}");
                for r in &d.recycled {
                    assert!(!d.selected.contains(r), "selected/recycled overlap");
                }
                let mut union: Vec<usize> =
                    d.selected.iter().chain(&d.recycled).copied().collect();
                union.sort_unstable();
                assert_eq!(union, d.retained);
                cases += 1;
            }
        }
    }
    // And through the full forward path, one seed per combination.
    for &rate in &rates {
        for &rho in &rhos {
            let mut cfg = small_config();
            cfg.prune.rate = rate;
            cfg.prune.recycle_fraction = rho;
            let bundle = generate_scenario(7, &cfg).unwrap();
            let out = probe(&bundle, 0).unwrap();
            let d = &out.trace.steps[0].decision;
            let expected = cfg.prune_config().budget(cfg.visual_tokens());
            assert_eq!(d.retained.len(), expected.total);
            assert_eq!(out.layout.visual_count(), expected.total);
            cases += 1;
        }
    }
    pass(4, &format!("{cases} cases: |retained| == budget, selected and recycled disjoint"));
}

#[test]
fn criterion_05_brute_force_oracle_equivalence() {
    let mut checked = 0u32;
    for trial in 0..200u64 {
        let mut rng = RngSeed::new(5000 + trial).rng();
        use rand::Rng;
        let views = rng.gen_range(1..=2usize);
        let per_view = rng.gen_range(2..=(16 / views));
        let text = rng.gen_range(1..=4usize);
        let layout = SequenceLayout::visual_then_text(views, per_view, text);
        let len = layout.len();
        let dim = rng.gen_range(3..=8usize);
        let h = Matrix2D::randn(len, dim, 1.0, &mut rng);
        let logits = Matrix2D::randn(len, len, 1.5, &mut rng);
        let scoring = softmax_rows(&logits).unwrap();
        let rate = rng.gen_range(0.0..0.9);
        let rho = rng.gen_range(0.0..0.4);
        let cfg = PruneConfig {
            pruning_rate: rate,
            recycle_fraction: rho,
            sparse_layers: vec![0],
        };
        let got = prune_step(&h, &scoring, &layout, &cfg).unwrap();
        let want = common::oracle_decision(&h, &scoring, &layout, rate, rho);
        assert_eq!(got.budget, want.budget, "trial {trial}");
        assert_eq!(got.selected, want.selected, "trial {trial}");
        assert_eq!(got.recycled, want.recycled, "trial {trial}");
        assert_eq!(got.retained, want.retained, "trial {trial}");
        checked += 1;
    }
    pass(5, &format!("{checked} random instances match the direct recomputation exactly"));
}

#[test]
fn criterion_06_scale_invariance_of_selection() {
    let cfg = Config::default();
    let master = RngSeed::new(21);
    for i in 0..50 {
        let seed = master.derive_index(i).0;
        let bundle = generate_scenario(seed, &cfg).unwrap();
        let out = probe(&bundle, 0).unwrap();
        let art = out.trace.steps[0].artifacts.as_ref().unwrap().clone();
        let sparse_layer = bundle.stack.spec.sparse_layers[0];
        let lw = &bundle.stack.weights.layers[sparse_layer];
        let score = |h: &Matrix2D| scoring_weights_from(h, lw, &bundle.stack.spec).unwrap();
        let base =
            prune_step(&art.h_input, &score(&art.h_input), &art.layout, &bundle.prune).unwrap();
        for c in [0.5, 2.0] {
            let scaled = art.h_input.scale(c);
            let d = prune_step(&scaled, &score(&scaled), &art.layout, &bundle.prune).unwrap();
            assert_eq!(d.selected, base.selected, "seed {seed} c {c}");
            assert_eq!(d.recycled, base.recycled, "seed {seed} c {c}");
            assert_eq!(d.retained, base.retained, "seed {seed} c {c}");
        }
    }
    pass(6, "50 seeds: decisions identical under hidden-state scaling by 0.5 and 2");
}

#[test]
fn criterion_07_tfm_properties() {
    use fusion::{FusionConfig, FusionWeights};
    // Output shape T x d for n in {0, 2, 5}.
    for n in [0usize, 2, 5] {
        let cfg = FusionConfig {
            history: n,
            feature_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            encoder_layers: 1,
        };
        let w = FusionWeights::init(&cfg, RngSeed::new(31));
        let mut rng = RngSeed::new(32 + n as u64).rng();
        let mut frames = Matrix3D::zeros(n + 1, 10, 8);
        for t in 0..=n {
            frames.set_slice(t, &Matrix2D::randn(10, 8, 1.0, &mut rng)).unwrap();
        }
        let f = fusion::FrameFeatures::new(
            frames,
            vec![fusion::ViewSpan { view_id: 0, start: 0, end: 10 }],
        )
        .unwrap();
        let out = fusion::fuse(&f, &w).unwrap();
        assert_eq!((out.rows(), out.cols()), (10, 8), "n = {n}");
    }

    // Aggregation invariant under positive rescaling of the weights.
    let mut rng = RngSeed::new(33).rng();
    let mut frames = Matrix3D::zeros(3, 6, 5);
    for t in 0..3 {
        frames.set_slice(t, &Matrix2D::randn(6, 5, 1.0, &mut rng)).unwrap();
    }
    let f = fusion::FrameFeatures::new(
        frames,
        vec![fusion::ViewSpan { view_id: 0, start: 0, end: 6 }],
    )
    .unwrap();
    let w = [0.5, 0.2, 0.9];
    let base = fusion::time_weighted_aggregate(&f, &w).unwrap();
    for c in [0.25, 4.0, 1000.0] {
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let out = fusion::time_weighted_aggregate(&f, &scaled).unwrap();
        for (a, b) in base.data().iter().zip(out.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    // Uniform weights equal the frame mean.
    let uniform = fusion::time_weighted_aggregate(&f, &[1.0; 3]).unwrap();
    for tok in 0..6 {
        for k in 0..5 {
            let mean: f64 = (0..3).map(|t| f.frames().at(t, tok, k)).sum::<f64>() / 3.0;
            assert!((uniform.at(tok, k) - mean).abs() <= 1e-12);
        }
    }
    pass(7, "shape T x d for n in {0,2,5}; rescale-invariant to 1e-12; uniform = frame mean");
}

#[test]
fn criterion_08_gradient_verification() {
    let w = LossWeights { lateral: 2.0, velocity: 0.5, endpoint: 1.0 };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let mut rng = RngSeed::new(8000 + trial).rng();
        let pred = Trajectory::new(Matrix2D::randn(8, 3, 2.0, &mut rng)).unwrap();
        let gt = Trajectory::new(Matrix2D::randn(8, 3, 2.0, &mut rng)).unwrap();
        let grad = loss_gradient(&pred, &gt, &w).unwrap();
        for i in 0..8 {
            for c in 0..3 {
                let mut plus = pred.clone();
                plus.waypoints.set(i, c, plus.waypoints.at(i, c) + h);
                let mut minus = pred.clone();
                minus.waypoints.set(i, c, minus.waypoints.at(i, c) - h);
                let fd = (composite_loss(&plus, &gt, &w).unwrap().total
                    - composite_loss(&minus, &gt, &w).unwrap().total)
                    / (2.0 * h);
                let a = grad.at(i, c);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
    pass(8, &format!("50 trajectory pairs, max relative gradient error {worst:.2e} < 1e-4"));
}

#[test]
fn criterion_09_attention_path_equivalence() {
    let spec = ArchSpec::new(1, 16, 4, 32, vec![]).unwrap();
    let mut max_diff: f64 = 0.0;
    for trial in 0..50u64 {
        let w = LayerWeights::init(16, 32, RngSeed::new(9000 + trial));
        let mut rng = RngSeed::new(9500 + trial).rng();
        let h = Matrix2D::randn(16, 16, 1.0, &mut rng);
        let positions: Vec<u64> = (0..16).collect();
        let streaming =
            attention_forward(&h, &w, &spec, &positions, WantWeights::NONE, None).unwrap();
        let eager = attention_forward(
            &h,
            &w,
            &spec,
            &positions,
            WantWeights { scoring: true, masked: true },
            None,
        )
        .unwrap();
        for (a, b) in streaming.output.data().iter().zip(eager.output.data()) {
            max_diff = max_diff.max((a - b).abs());
        }

        // Causal property: perturbing token j never changes outputs at i < j.
        let j = 9;
        let mut h2 = h.clone();
        for v in h2.row_mut(j) {
            *v += 3.0;
        }
        let pert =
            attention_forward(&h2, &w, &spec, &positions, WantWeights::NONE, None).unwrap();
        for i in 0..j {
            for (a, b) in streaming.output.row(i).iter().zip(pert.output.row(i)) {
                assert_eq!(a, b, "trial {trial}: output {i} moved when {j} changed");
            }
        }
    }
    assert!(max_diff <= 1e-10, "paths diverge by {max_diff}");
    pass(9, &format!("50 forwards, paths agree to {max_diff:.2e} <= 1e-10; causal property holds"));
}

#[test]
fn criterion_10_harness_behavioral_claims() {
    let master = RngSeed::new(77);

    // (a) High alignment: text-guided recall beats random by >= 0.3.
    let cfg = Config::default();
    let mut ours = Vec::new();
    let mut random = Vec::new();
    for i in 0..100 {
        let seed = master.derive_index(i).0;
        let bundle = generate_scenario(seed, &cfg).unwrap();
        let out = probe(&bundle, 0).unwrap();
        let step = &out.trace.steps[0];
        let art = step.artifacts.as_ref().unwrap();
        ours.push(salient_recall(&step.decision.retained, bundle.planted()));
        let r = strategies::random_baseline(&art.layout, step.decision.budget, RngSeed::new(seed))
            .unwrap();
        random.push(salient_recall(&r.retained, bundle.planted()));
    }
    let (ours_mean, _) = mean_std(&ours);
    let (random_mean, _) = mean_std(&random);
    let gap = ours_mean - random_mean;
    assert!(gap >= 0.3, "recall gap {gap:.3} < 0.3 (ours {ours_mean:.3}, random {random_mean:.3})");

    // (b) Zero alignment: recall statistically indistinguishable from the
    // retention ratio.
    let mut cfg0 = Config::default();
    cfg0.scenario.alignment_strength = 0.0;
    let mut null = Vec::new();
    for i in 0..100 {
        let seed = master.derive_index(1000 + i).0;
        let bundle = generate_scenario(seed, &cfg0).unwrap();
        let out = probe(&bundle, 0).unwrap();
        null.push(salient_recall(&out.trace.steps[0].decision.retained, bundle.planted()));
    }
    let (null_mean, null_std) = mean_std(&null);
    let retention = cfg0.prune_config().budget(cfg0.visual_tokens()).total as f64
        / cfg0.visual_tokens() as f64;
    let sigma = null_std / (null.len() as f64).sqrt();
    assert!(
        (null_mean - retention).abs() <= 3.0 * sigma,
        "null recall {null_mean:.4} vs retention {retention:.4} (3 sigma {:.4})",
        3.0 * sigma
    );

    // (c) Recycling coverage: at r = 0.85 the recycle share (k = 6) matches
    // the view count; mean per-view coverage must not fall below the pure
    // global top-(K+k) selection.
    let mut cfg85 = Config::default();
    cfg85.prune.rate = 0.85;
    let k = cfg85.prune_config().budget(cfg85.visual_tokens()).recycle_k;
    assert!(k >= cfg85.scenario.views, "premise: k {k} >= views");
    let mut cov_ours = Vec::new();
    let mut cov_global = Vec::new();
    for i in 0..100 {
        let seed = master.derive_index(2000 + i).0;
        let bundle = generate_scenario(seed, &cfg85).unwrap();
        let out = probe(&bundle, 0).unwrap();
        let step = &out.trace.steps[0];
        cov_ours.push(per_view_coverage(&step.decision.retained, &bundle.layout, 6));
        let g = strategies::global_top_b(&step.decision.importance, step.decision.budget).unwrap();
        cov_global.push(per_view_coverage(&g.retained, &bundle.layout, 6));
    }
    let (ours_cov, _) = mean_std(&cov_ours);
    let (global_cov, _) = mean_std(&cov_global);
    assert!(
        ours_cov >= global_cov,
        "coverage {ours_cov:.4} fell below global top-B {global_cov:.4}"
    );
    pass(
        10,
        &format!(
            "recall gap {gap:.3} >= 0.3; null recall {null_mean:.3} within 3 sigma of {retention:.3}; \
             coverage {ours_cov:.3} >= {global_cov:.3}"
        ),
    );
}

#[test]
fn criterion_11_report_determinism() {
    let mut cfg = small_config();
    cfg.bench.seeds = 4;
    let a = runner::run_bench(&cfg, ExecMode::Sequential).unwrap();
    let b = runner::run_bench(&cfg, ExecMode::Sequential).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.per_seed_csv(), b.per_seed_csv());
    // The parallel loop merges per-seed results in seed order and must
    // produce the very same bytes.
    let c = runner::run_bench(&cfg, ExecMode::Parallel).unwrap();
    assert_eq!(a.to_json(), c.to_json());

    let dir = tempfile::tempdir().unwrap();
    let d1 = dir.path().join("run1");
    let d2 = dir.path().join("run2");
    a.write_files(&d1).unwrap();
    c.write_files(&d2).unwrap();
    for name in ["report.json", "summary.csv", "per_seed.csv"] {
        let x = std::fs::read(d1.join(name)).unwrap();
        let y = std::fs::read(d2.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    pass(11, "bench reports byte-identical across runs and across seq/parallel execution");
}
