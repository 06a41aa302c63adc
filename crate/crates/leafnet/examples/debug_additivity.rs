//! Scratch probe: per-tensor comparison of joint vs summed head backwards.

use leafnet::layers::softmax_cross_entropy;
use leafnet::model::{build_model, ArchConfig, TaskMode};
use leafnet::{RngStream, Tensor};

fn main() {
    let arch = ArchConfig {
        mode: TaskMode::MultiTask,
        input_size: 16,
        stage_widths: vec![16, 32, 64],
        blocks_per_stage: 1,
    };
    let mut rng = RngStream::new(7, 0);
    let mut net = build_model::<f32>(&arch, &mut rng).unwrap();
    let mut xr = RngStream::new(8, 0);
    let x = Tensor::<f32>::from_f64_slice(&[2, 3, 16, 16], &xr.uniform_vec(2 * 3 * 16 * 16)).unwrap();
    let (out, tape) = net.forward_train(&x).unwrap();
    let mut t_stress = Tensor::<f32>::zeros(&[2, 5]);
    t_stress.data_mut()[1] = 1.0;
    t_stress.data_mut()[5 + 3] = 1.0;
    let mut t_sev = Tensor::<f32>::zeros(&[2, 5]);
    t_sev.data_mut()[0] = 1.0;
    t_sev.data_mut()[5 + 4] = 1.0;
    let (_, g_stress) = softmax_cross_entropy(out.logits_stress.as_ref().unwrap(), &t_stress).unwrap();
    let (_, g_sev) = softmax_cross_entropy(out.logits_severity.as_ref().unwrap(), &t_sev).unwrap();

    let joint = net.backward(&tape, Some(&g_stress), Some(&g_sev)).unwrap();
    let a = net.backward(&tape, Some(&g_stress), None).unwrap();
    let b = net.backward(&tape, None, Some(&g_sev)).unwrap();

    let names: Vec<String> = net
        .param_meta()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    for (((j, av), bv), name) in joint
        .trunk_flatten()
        .iter()
        .zip(a.trunk_flatten())
        .zip(b.trunk_flatten())
        .zip(&names)
    {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for ((&jv, &x1), &x2) in j.data().iter().zip(av.data()).zip(bv.data()) {
            let d = jv as f64 - (x1 as f64 + x2 as f64);
            num += d * d;
            den += (jv as f64) * (jv as f64);
        }
        println!(
            "{name}: rel {:.3e}  (|joint| {:.3e})",
            (num / den.max(1e-30)).sqrt(),
            den.sqrt()
        );
    }
}
