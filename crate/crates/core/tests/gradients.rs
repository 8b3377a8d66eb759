use hiwave_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(model: &HiWaveModel, x: &Tensor, y: &[usize]) -> f64 {
    Trainer::gradients(model, x, y, None).unwrap().0
}

fn check_model(tok: TokenizerConfig, groups: &[&str], per_group: usize) {
    let raw = synthetic_har(4, 6, 21);
    let data = standardize(&raw, &ChannelStats::from_train(&raw)).unwrap();
    let (x, y) = data.gather(&[0, 1, 2, 3]);
    let mut model = HiWaveModel::build(ModelConfig::default(), tok, 5).unwrap();
    let (_, _, grads) = Trainer::gradients(&model, &x, &y, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-5;
    let mut checked = 0;
    for group in groups {
        let ids: Vec<usize> = model
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.name.starts_with(group))
            .map(|(i, _)| i)
            .collect();
        assert!(!ids.is_empty(), "no parameters under {group}");
        for _ in 0..per_group {
            let pi = ids[rng.random_range(0..ids.len())];
            let n = model.params().iter().nth(pi).unwrap().value.numel();
            let ei = rng.random_range(0..n);
            let nudge = |m: &mut HiWaveModel, d: f64| {
                m.params_mut().iter_mut().nth(pi).unwrap().value.data_mut()[ei] += d;
            };
            nudge(&mut model, h);
            let up = loss(&model, &x, &y);
            nudge(&mut model, -2.0 * h);
            let down = loss(&model, &x, &y);
            nudge(&mut model, h);
            let fd = (up - down) / (2.0 * h);
            let an = grads[pi][ei];
            let scale = fd.abs().max(an.abs());
            let name = &model.params().iter().nth(pi).unwrap().name;
            if scale > 1e-9 {
                assert!(
                    (fd - an).abs() / scale < 1e-4,
                    "{name}[{ei}]: analytic {an}, numeric {fd}"
                );
            } else {
                assert!((fd - an).abs() < 1e-9, "{name}[{ei}]: analytic {an}, numeric {fd}");
            }
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn champion_loss_gradient_matches_finite_differences() {
    check_model(
        TokenizerConfig::champion(),
        &[
            "input.",
            "cls",
            "layers.0.attn.q",
            "layers.1.attn.k",
            "layers.2.attn.v",
            "layers.0.attn.o",
            "layers.1.ffn.up",
            "layers.2.ffn.down",
            "layers.0.attn_norm",
            "layers.2.ffn_norm",
            "final_norm",
            "head.",
            "tokenizer.gem",
        ],
        2,
    );
}

#[test]
fn pyramid_exponents_match_finite_differences() {
    let tok = TokenizerConfig {
        depth_set: vec![1, 2, 3],
        ..TokenizerConfig::champion()
    };
    check_model(
        tok,
        &[
            "tokenizer.gem.level1",
            "tokenizer.gem.level2",
            "tokenizer.gem.level3",
            "head.",
            "input.",
        ],
        4,
    );
}
