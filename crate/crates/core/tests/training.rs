use rdl_core::config::{Mechanism, RunConfig};
use rdl_core::events::SyntheticSpec;
use rdl_core::harness::{evaluate, synthetic_dataset, EvalOptions, Session};

fn class_mean(s: &Session, class: usize) -> f64 {
    let dec = &s.net.decision;
    let n = dec.n_neurons();
    let group = dec.group(class);
    let ws: Vec<f64> = dec
        .forward_w
        .iter()
        .enumerate()
        .filter(|(k, _)| group.contains(&(k % n)))
        .map(|(_, w)| *w)
        .collect();
    ws.iter().sum::<f64>() / ws.len() as f64
}

#[test]
fn separable_set_is_learned() {
    let cfg = RunConfig::synthetic();
    let spec = SyntheticSpec::moving_bars(3, (8, 8), 50, 4, 0.01, 1);
    let ds = synthetic_dataset(&spec, 50, 0, None).unwrap();
    let mut s = Session::new(cfg.clone(), ds.shape).unwrap();
    s.train_layer1(&ds.train, cfg.training.layer1_max_epochs, &mut |_| {}).unwrap();
    s.train_layer2(&ds.train, cfg.training.layer2_max_epochs, &mut |_| {}).unwrap();
    let report = evaluate(&s.net, &s.config, &ds.train, &EvalOptions::default()).unwrap();
    assert!(report.accuracy >= 0.95, "train accuracy {}", report.accuracy);
}

/// With reward off and every other regulator disabled, only decision
/// homeostasis moves the forward weights. A class that keeps winning is
/// pushed down and the silent classes are pulled up.
#[test]
fn single_class_data_lifts_the_other_classes() {
    let mut cfg = RunConfig::synthetic();
    cfg.training.kappa = 0.0;
    cfg.disabled = Mechanism::ALL
        .into_iter()
        .filter(|m| !matches!(m, Mechanism::DecisionHomeo | Mechanism::Lateral))
        .collect();
    let spec = SyntheticSpec::moving_bars(3, (8, 8), 50, 4, 0.01, 3);
    let ds = synthetic_dataset(&spec, 30, 0, Some(vec![30, 0, 0])).unwrap();
    assert!(ds.train.iter().all(|x| x.label == 0));

    let mut s = Session::new(cfg, ds.shape).unwrap();
    s.begin_layer2();
    // Let class 0 dominate from the start.
    let n = s.net.decision.n_neurons();
    let g0 = s.net.decision.group(0);
    for (k, w) in s.net.decision.forward_w.iter_mut().enumerate() {
        if g0.contains(&(k % n)) {
            *w = 1.0;
        }
    }
    let before: Vec<f64> = (0..3).map(|c| class_mean(&s, c)).collect();
    let mut wins = 0;
    s.train_layer2(&ds.train, 1, &mut |log| wins += usize::from(log.predicted == Some(0))).unwrap();
    let after: Vec<f64> = (0..3).map(|c| class_mean(&s, c)).collect();

    assert!(wins > 0, "class 0 never predicted");
    assert!(after[0] < before[0], "dominant class {} -> {}", before[0], after[0]);
    for c in 1..3 {
        assert!(after[c] > before[c], "class {c} {} -> {}", before[c], after[c]);
    }
}

/// On a single moving-bar motif, some map should learn delays that bring
/// the two columns of its kernel into coincidence: the earlier column waits
/// `step` bins longer than the later one.
#[test]
#[ignore = "the delay rule as implemented drives delays apart instead of aligning them; see README"]
fn single_motif_delays_align() {
    let cfg = RunConfig::synthetic();
    let step = 4.0;
    let spec = SyntheticSpec::moving_bars(1, (8, 8), 50, step as usize, 0.0, 5);
    let ds = synthetic_dataset(&spec, 40, 0, None).unwrap();
    let mut s = Session::new(cfg.clone(), ds.shape).unwrap();
    s.train_layer1(&ds.train, cfg.training.layer1_max_epochs, &mut |_| {}).unwrap();

    let conv = &s.net.conv;
    let aligned = (0..conv.n_maps).any(|m| {
        (0..conv.kernel.0).all(|ky| {
            let early = conv.delays[conv.kernel_index(m, 1, ky, 0)];
            let late = conv.delays[conv.kernel_index(m, 1, ky, 1)];
            (early - late - step).abs() <= 1.0
        })
    });
    let grids: Vec<_> = (0..conv.n_maps).map(|m| conv.kernel_grid(m, 1, true)).collect();
    assert!(aligned, "no map aligned: {grids:?}");
}
