use crate::error::{Error, Result};
use crate::supernet::{SearchSpaceConfig, SupernetState};

fn check_space(source: &SupernetState, target_space: &SearchSpaceConfig) -> Result<()> {
    let (s, t) = (source.config.fingerprint(), target_space.fingerprint());
    if s != t {
        return Err(Error::Incompatible(format!(
            "source search space {s} differs from target {t}"
        )));
    }
    Ok(())
}

/// Warm start: copy stem, cells and logits from `source`. The head is copied
/// when the class counts match and freshly seeded otherwise. Step count and
/// optimizer state are reset.
pub fn transfer_weights(
    source: &SupernetState,
    target_space: &SearchSpaceConfig,
    target_num_classes: usize,
    seed: u64,
) -> Result<SupernetState> {
    check_space(source, target_space)?;
    let mut state = source.clone();
    if state.num_classes != target_num_classes {
        state.reset_head(target_num_classes, seed);
    }
    state.step_count = 0;
    state.rng_seed = seed;
    state.reset_optimizer();
    state.zero_grads();
    Ok(state)
}

/// Like [`transfer_weights`] but the head is always re-initialized.
pub fn transfer_trunk(
    source: &SupernetState,
    target_space: &SearchSpaceConfig,
    target_num_classes: usize,
    seed: u64,
) -> Result<SupernetState> {
    let mut state = transfer_weights(source, target_space, target_num_classes, seed)?;
    state.reset_head(target_num_classes, seed);
    Ok(state)
}
