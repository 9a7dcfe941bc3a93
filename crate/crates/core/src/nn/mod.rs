//! Small from-scratch neural network engine: batch-first tensors, layers with
//! explicit backward passes, MSE/BCE losses, Adam, gradient checking and a
//! JSON checkpoint container.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod ops;
mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error, Corruption, GradCheckOptions, GradCheckReport};
pub use layers::{
    sigmoid, BatchNorm, Conv2d, ConvTranspose2d, Dense, Layer, LeakyRelu, MaxPool2d, Param,
    Reshape, Sigmoid,
};
pub use loss::{bce_loss, mse_loss, BCE_CLAMP};
pub use network::{Network, NetworkBuilder};
pub use optim::AdamState;
pub use tensor::Tensor;

pub const LEAKY_RELU_ALPHA: f64 = 0.2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn single(layer: Layer, input: &[usize]) -> Network {
        Network {
            input_shape: input.to_vec(),
            layers: vec![layer],
        }
    }

    #[test]
    fn activation_examples() {
        let mut net = Network::builder(&[3], 0).leaky_relu(LEAKY_RELU_ALPHA).build().unwrap();
        let y = net.forward(&Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap(), false).unwrap();
        assert_eq!(y.data(), &[-0.2, 0.0, 2.0]);

        let mut net = Network::builder(&[1], 0).sigmoid().build().unwrap();
        let y = net.forward(&Tensor::new(vec![1, 1], vec![0.0]).unwrap(), false).unwrap();
        assert_eq!(y.data(), &[0.5]);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn maxpool_picks_max_and_routes_to_first_tie() {
        let mut net = Network::builder(&[1, 2, 2], 0).maxpool(2).build().unwrap();
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(net.forward(&x, true).unwrap().data(), &[4.0]);

        let x = Tensor::new(vec![1, 1, 2, 2], vec![5.0, 1.0, 5.0, 5.0]).unwrap();
        net.forward(&x, true).unwrap();
        let dx = net.backward(&Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_gradient_by_hand() {
        // y = W x with W 2×2, x = [1, 2], g = [3, -1] → dW = g xᵀ, dx = Wᵀ g
        let dense = Dense::new(2, 2, vec![0.5, -1.0, 2.0, 0.25]);
        let mut net = single(Layer::Dense(dense), &[2]);
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let y = net.forward(&x, true).unwrap();
        assert_eq!(y.data(), &[-1.5, 2.5]);
        let dx = net.backward(&Tensor::new(vec![1, 2], vec![3.0, -1.0]).unwrap()).unwrap();
        let params = net.params();
        assert_eq!(params[0].grad, vec![3.0, 6.0, -1.0, -2.0]);
        assert_eq!(params[1].grad, vec![3.0, -1.0]);
        assert_eq!(dx.data(), &[3.0 * 0.5 - 2.0, -3.0 - 0.25]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut net = Network::builder(&[2, 6, 6], 1)
            .conv2d(3, (3, 3), (1, 1), (1, 1))
            .batchnorm()
            .leaky_relu(0.2)
            .flatten()
            .dense(4)
            .build()
            .unwrap();
        let y = net.forward(&random(&[2, 2, 6, 6], 2), true).unwrap();
        net.backward(&Tensor::zeros(y.shape().to_vec())).unwrap();
        assert!(net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn conv2d_matches_direct_correlation() {
        let (c, h, w, o, k) = (2, 5, 6, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let weight: Vec<f64> = (0..o * c * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut conv = Conv2d::new(c, o, (k, k), (2, 1), (1, 0), weight.clone());
        conv.bias.value = vec![0.1, -0.2, 0.3];
        let mut net = single(Layer::Conv2d(conv), &[c, h, w]);
        let x = random(&[1, c, h, w], 3);
        let y = net.forward(&x, false).unwrap();
        let (oh, ow) = ((h + 2 - k) / 2 + 1, w - k + 1);
        assert_eq!(y.shape(), &[1, o, oh, ow]);
        let px = |ci: usize, iy: isize, ix: usize| {
            if iy < 0 || iy >= h as isize {
                0.0
            } else {
                x.data()[(ci * h + iy as usize) * w + ix]
            }
        };
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = [0.1, -0.2, 0.3][oc];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wv = weight[((oc * c + ci) * k + ky) * k + kx];
                                acc += wv * px(ci, (oy * 2 + ky) as isize - 1, ox + kx);
                            }
                        }
                    }
                    assert!((acc - y.data()[(oc * oh + oy) * ow + ox]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_conv_is_the_adjoint_of_conv() {
        // ⟨conv(x), y⟩ = ⟨x, convᵀ(y)⟩ with shared weights and zero bias.
        let (c, o, h, w) = (2, 3, 7, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let weight: Vec<f64> = (0..o * c * 3 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut conv = single(
            Layer::Conv2d(Conv2d::new(c, o, (3, 5), (2, 2), (1, 2), weight.clone())),
            &[c, h, w],
        );
        let x = random(&[1, c, h, w], 5);
        let cx = conv.forward(&x, false).unwrap();
        let out = cx.sample_shape().to_vec();
        // 7 and 8 both need output padding 1 and 0 to be recovered
        let mut convt = single(
            Layer::ConvTranspose2d(ConvTranspose2d::new(o, c, (3, 5), (2, 2), (1, 2), (0, 1), weight)),
            &out,
        );
        let y = random(cx.shape(), 6);
        let ty = convt.forward(&y, false).unwrap();
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let mut net = Network {
            input_shape: vec![4],
            layers: vec![
                Layer::Dense(Dense::new(4, 3, vec![0.0; 12])),
                Layer::Dense(Dense::new(5, 1, vec![0.0; 5])),
            ],
        };
        let err = net.forward(&Tensor::zeros(vec![2, 4]), false).unwrap_err();
        match err {
            Error::Shape { layer, .. } => assert_eq!(layer, "layer 1 (dense)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            net.forward(&Tensor::zeros(vec![2, 5]), false),
            Err(Error::Shape { .. })
        ));
        let built = Network::builder(&[1, 3, 3], 0).maxpool(4).build();
        assert!(matches!(built, Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut net = Network::builder(&[3], 0).dense(2).build().unwrap();
        assert!(matches!(net.backward(&Tensor::zeros(vec![1, 2])), Err(Error::State(_))));
    }

    #[test]
    fn batchnorm_statistics_are_non_trainable() {
        let net = Network::builder(&[4, 5, 5], 0)
            .conv2d(6, (3, 3), (1, 1), (1, 1))
            .batchnorm()
            .build()
            .unwrap();
        assert_eq!(net.trainable_count(), 6 * 4 * 9 + 6 + 12);
        assert_eq!(net.non_trainable_count(), 12);
    }

    #[test]
    fn batchnorm_modes() {
        let mut net = Network::builder(&[2], 0).batchnorm().build().unwrap();
        let x = Tensor::new(vec![4, 2], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]).unwrap();
        let y = net.forward(&x, true).unwrap();
        for ch in 0..2 {
            let col: Vec<f64> = (0..4).map(|i| y.data()[i * 2 + ch]).collect();
            assert!(col.iter().sum::<f64>().abs() < 1e-12);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
        let Layer::BatchNorm(bn) = &net.layers[0] else { unreachable!() };
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        // unbiased variance of [1,2,3,4] is 5/3
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        let before = net.clone();
        net.forward(&x, false).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn forward_is_deterministic() {
        let build = || {
            Network::builder(&[1, 8, 8], 42)
                .conv2d(4, (3, 3), (1, 1), (1, 1))
                .leaky_relu(0.2)
                .maxpool(2)
                .flatten()
                .dense(3)
                .build()
                .unwrap()
        };
        let x = random(&[3, 1, 8, 8], 1);
        let (mut a, mut b) = (build(), build());
        assert_eq!(a, b);
        assert_eq!(a.forward(&x, true).unwrap(), b.forward(&x, true).unwrap());
        let other = Network::builder(&[1, 8, 8], 43).conv2d(4, (3, 3), (1, 1), (1, 1)).build().unwrap();
        assert_ne!(a.layers[0], other.layers[0]);
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = Param::new(vec![1], vec![1.0]);
        p.grad = vec![0.5];
        let mut adam = AdamState::default();
        adam.step(vec![&mut p]).unwrap();
        let expected = 1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((1.0 - p.value[0] - expected).abs() < 1e-15);
        assert!((1.0 - p.value[0] - 9.99998e-4).abs() < 1e-8);
        assert_eq!(adam.t, 1);

        let mut q = Param::new(vec![2], vec![1.0, -2.0]);
        let mut adam = AdamState::default();
        adam.step(vec![&mut q]).unwrap();
        assert_eq!(q.value, vec![1.0, -2.0]);
        assert_eq!(adam.t, 1);
        let mut wrong = Param::new(vec![3], vec![0.0; 3]);
        assert!(adam.step(vec![&mut wrong]).is_err());
    }

    #[test]
    fn mse_examples() {
        let t = |v: Vec<f64>| Tensor::new(vec![1, v.len()], v).unwrap();
        let (l, g) = mse_loss(&t(vec![2.0]), &t(vec![0.0])).unwrap();
        assert_eq!((l, g.data().to_vec()), (2.0, vec![2.0]));
        let (l, g) = mse_loss(&t(vec![1.0, 3.0]), &t(vec![1.0, 3.0])).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let (l1, _) = mse_loss(&t(vec![1.5, -0.5]), &t(vec![1.0, 0.0])).unwrap();
        let (l2, _) = mse_loss(&t(vec![2.0, -1.0]), &t(vec![1.0, 0.0])).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-15);
        let batch = Tensor::new(vec![2, 1], vec![2.0, 0.0]).unwrap();
        let (l, g) = mse_loss(&batch, &Tensor::zeros(vec![2, 1])).unwrap();
        assert_eq!((l, g.data().to_vec()), (1.0, vec![1.0, 0.0]));
        assert!(mse_loss(&t(vec![1.0]), &t(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn bce_examples_and_gradient() {
        let t = |v: Vec<f64>| Tensor::new(vec![v.len(), 1], v).unwrap();
        let (l, _) = bce_loss(&t(vec![0.5]), &t(vec![1.0])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let (l, _) = bce_loss(&t(vec![1.0, 0.0]), &t(vec![1.0, 0.0])).unwrap();
        assert!(l <= -(1.0 - 1e-7f64).ln() + 1e-18);
        assert!(matches!(bce_loss(&t(vec![0.5]), &t(vec![0.3])), Err(Error::Domain(_))));

        let pred = vec![0.2, 0.7, 0.55, 0.9];
        let target = t(vec![1.0, 0.0, 1.0, 1.0]);
        let (_, g) = bce_loss(&t(pred.clone()), &target).unwrap();
        let h = 1e-6;
        for i in 0..pred.len() {
            let (mut up, mut down) = (pred.clone(), pred.clone());
            up[i] += h;
            down[i] -= h;
            let numeric = (bce_loss(&t(up), &target).unwrap().0 - bce_loss(&t(down), &target).unwrap().0)
                / (2.0 * h);
            assert!(relative_error(g.data()[i], numeric) < 1e-4);
        }
    }

    fn assert_grad_ok(net: &Network, input: &[usize]) {
        for seed in 0..5 {
            let x = random(input, 100 + seed);
            let opts = GradCheckOptions {
                seed,
                ..GradCheckOptions::default()
            };
            let report = grad_check(net, &x, &opts).unwrap();
            assert!(report.passed(), "seed {seed}: {report:?}");
            assert!(report.checked > 0);
        }
    }

    #[test]
    fn gradcheck_dense_sigmoid() {
        let net = Network::builder(&[5], 3).dense(4).sigmoid().build().unwrap();
        assert_grad_ok(&net, &[3, 5]);
    }

    #[test]
    fn gradcheck_conv_leaky_relu() {
        let net = Network::builder(&[2, 6, 7], 3)
            .conv2d(3, (3, 3), (2, 1), (1, 1))
            .leaky_relu(0.2)
            .build()
            .unwrap();
        assert_grad_ok(&net, &[2, 2, 6, 7]);
    }

    #[test]
    fn gradcheck_detects_corrupted_weight_gradient() {
        let net = Network::builder(&[2, 6, 7], 3)
            .conv2d(3, (3, 3), (1, 1), (1, 1))
            .leaky_relu(0.2)
            .build()
            .unwrap();
        let opts = GradCheckOptions {
            corruption: Some(Corruption::ScaleParamGrad { param: 0, factor: 2.0 }),
            ..GradCheckOptions::default()
        };
        let report = grad_check(&net, &random(&[2, 2, 6, 7], 1), &opts).unwrap();
        assert!(!report.passed());
        assert!(report.worst.starts_with("param 0"));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut net = Network::builder(&[1, 4, 4], 11)
            .conv2d(2, (3, 3), (1, 1), (1, 1))
            .batchnorm()
            .leaky_relu(0.2)
            .flatten()
            .dense(3)
            .build()
            .unwrap();
        net.forward(&random(&[4, 1, 4, 4], 2), true).unwrap();
        let ck = Checkpoint::new("network", 11, net.clone());
        let back: Checkpoint<Network> = Checkpoint::from_json(&ck.to_json().unwrap(), "network").unwrap();
        assert_eq!(back.body, net);
        assert_eq!(back.seed, 11);
        assert!(matches!(
            Checkpoint::<Network>::from_json(&ck.to_json().unwrap(), "cae"),
            Err(Error::Checkpoint(_))
        ));
    }
}
