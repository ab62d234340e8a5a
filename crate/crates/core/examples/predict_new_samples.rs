//! Fit on a stratified training split, then classify and complete the
//! held-out series: MAP class, logistic probability and imputation error.

use magic_core::eval::stratified_split;
use magic_core::metrics::{auc, imputation_mse};
use magic_core::model::{fit, MagicConfig, SampleSeries};
use magic_core::predict::Predictor;
use magic_core::sim::{apply_missingness, derive_seed, generate_dataset, SimConfig};

fn main() -> magic_core::Result<()> {
    let alpha = 0.8;
    let data = generate_dataset(&SimConfig { seed: 9, per_class: 30, ..SimConfig::default() })?;
    let labels: Vec<u8> = data.samples.iter().map(|s| s.label.expect("simulated")).collect();
    let (train, test) = stratified_split(&labels, 0.7, 9)?;
    let sparse: Vec<SampleSeries> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| apply_missingness(s, alpha, derive_seed(9, i as u64)))
        .collect::<Result<_, _>>()?;

    let train_set: Vec<SampleSeries> = train.iter().map(|&i| sparse[i].clone()).collect();
    let fitted = fit(&data.grid, &train_set, data.prior_means.clone(), &MagicConfig::default())?;
    let predictor = Predictor::new(&fitted.model)?;

    let (mut probs, mut truth, mut correct, mut mse) = (vec![], vec![], 0, 0.0);
    for &i in &test {
        let unlabeled = SampleSeries { label: None, ..sparse[i].clone() };
        let r = predictor.predict(&unlabeled)?;
        let missing: Vec<usize> = r.imputation.variance.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(j, _)| j).collect();
        mse += imputation_mse(r.imputation.curve.as_slice(), &data.samples[i].values, &missing)?;
        correct += usize::from(r.class == labels[i]);
        probs.push(r.probability);
        truth.push(labels[i]);
        println!("{:>4}  true {}  MAP {}  p(z=1) {:.3}", r.id, labels[i], r.class, r.probability);
    }
    println!(
        "\n{} test series: accuracy {:.3}, AUC {:.3}, mean imputation MSE {:.5}",
        test.len(),
        correct as f64 / test.len() as f64,
        auc(&probs, &truth)?,
        mse / test.len() as f64
    );
    Ok(())
}
