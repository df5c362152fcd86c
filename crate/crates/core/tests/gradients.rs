mod common;

use rand::Rng;
use reactgen::autograd::{Graph, ParamStore};
use reactgen::losses::Stage;
use reactgen::pipeline::{stage1_objective, stage2_objective, step_eps, ReactModel, TrainData};

use common::{dataset, fd_close, jitter, rng, tiny_config, FD_STEP};

fn objective(model: &ReactModel, ps: &ParamStore<f64>, data: &TrainData<f64>, stage: Stage) -> (f64, ParamStore<f64>) {
    let item = &data.items[0];
    let n = model.windows(item.inputs.speaker.nrows()).unwrap();
    assert!(stage == Stage::One || n == 1);
    let mut g = Graph::new();
    let total = match stage {
        Stage::One => {
            let eps = step_eps(model, 3, stage, 0, 0, 0, n);
            stage1_objective(&mut g, model, ps, item, &eps).unwrap().0
        }
        Stage::Two => {
            let eps: Vec<_> = (0..2).map(|m| step_eps(model, 3, stage, 0, 0, m, n)).collect();
            stage2_objective(&mut g, model, ps, item, &eps).unwrap().0
        }
    };
    let grads = g.backward(total);
    (g.scalar(total), grads.params(&g, ps))
}

fn check_parameters(stage: Stage, cfg: reactgen::ModelConfig) {
    let model = ReactModel::new(&cfg).unwrap();
    let mut ps = model.init_params::<f64>(1);
    jitter(&mut ps, 2, 0.05);
    let data = TrainData::<f64>::new(&dataset(&cfg)).unwrap();
    let (value, grads) = objective(&model, &ps, &data, stage);
    let mut r = rng(4);
    let mut checked = 0;
    for i in 0..ps.len() {
        // a few entries of every tensor
        for _ in 0..2 {
            let idx = r.gen_range(0..ps.value(i).len());
            let mut plus = ps.clone();
            plus.value_mut(i).as_slice_mut().unwrap()[idx] += FD_STEP;
            let mut minus = ps.clone();
            minus.value_mut(i).as_slice_mut().unwrap()[idx] -= FD_STEP;
            let numeric = (objective(&model, &plus, &data, stage).0 - objective(&model, &minus, &data, stage).0) / (2.0 * FD_STEP);
            let analytic = grads.value(i).as_slice().unwrap()[idx];
            assert!(fd_close(analytic, numeric, value), "{} [{idx}]: analytic {analytic} numeric {numeric}", ps.name(i));
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn stage1_parameter_gradients_match_finite_differences() {
    check_parameters(Stage::One, tiny_config());
}

// Stage 2 feeds generated windows back as detached history, so only a single
// window is a pure function of the parameters.
fn single_window() -> reactgen::ModelConfig {
    let mut cfg = tiny_config();
    cfg.frames = cfg.w;
    cfg
}

#[test]
fn stage2_parameter_gradients_match_finite_differences() {
    check_parameters(Stage::Two, single_window());
}

#[test]
fn ablated_paths_keep_exact_gradients() {
    let mut cfg = single_window();
    cfg.use_mim = false;
    cfg.use_rec_a = false;
    check_parameters(Stage::Two, cfg);
}
