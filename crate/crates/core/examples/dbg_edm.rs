use mmsynth::edm::*;
use ndarray::Array2;

fn main() {
    let z = Array2::zeros((64, 4));
    let schedule = NoiseSchedule::default();
    for (steps, lr, hidden) in [(1000usize, 3e-3, vec![32, 32, 16]), (2000, 3e-3, vec![64, 64, 32]), (2000, 1e-2, vec![64, 64, 32])] {
        let cfg = DiffusionTrainConfig { steps, lr, weight_decay: 0.0, batch: 64, hidden: hidden.clone(), emb_dim: 8 };
        let (_, log) = fit_diffusion(&z, &schedule, &cfg, 37).unwrap();
        let first: f64 = log[..20].iter().map(|l| l.loss).sum::<f64>() / 20.0;
        let last: f64 = log[steps - 100..].iter().map(|l| l.loss).sum::<f64>() / 100.0;
        println!("steps {steps} lr {lr} hidden {hidden:?}: first {first:.4} last {last:.6} ratio {:.4}", last / first);
    }
}
