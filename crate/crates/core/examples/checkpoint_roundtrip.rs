//! Save a fitted model as a versioned JSON checkpoint, load it back and
//! confirm predictions are unchanged bit for bit.

use magic_core::io::{load_model, save_model, CheckpointModel, ModelCheckpoint};
use magic_core::model::{fit, MagicConfig, SampleSeries};
use magic_core::sim::{apply_missingness, derive_seed, generate_dataset, SimConfig};

fn main() -> magic_core::Result<()> {
    let data = generate_dataset(&SimConfig { seed: 4, per_class: 15, ..SimConfig::default() })?;
    let sparse: Vec<SampleSeries> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| apply_missingness(s, 0.6, derive_seed(4, i as u64)))
        .collect::<Result<_, _>>()?;
    let config = MagicConfig { max_iters: 20, ..MagicConfig::default() };
    let fitted = fit(&data.grid, &sparse, data.prior_means.clone(), &config)?;

    let path = std::env::temp_dir().join("magic_checkpoint_example.json");
    let saved = CheckpointModel::Magic(fitted.model);
    save_model(&path, &ModelCheckpoint::new(saved.clone()))?;
    let loaded = load_model(&path)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!("identical after reload: {}", loaded.model == saved);

    for s in sparse.iter().take(5) {
        let (a, _) = saved.predict(s)?;
        let (b, _) = loaded.model.predict(s)?;
        println!("{:>4}  class {}  p {:.6}  same {}", a.id, a.class, a.probability, a == b);
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
