//! Regenerates the shipped synthetic corpus under `data/`.

use seqreg::synth::{long_distance_corpus, render, SHIPPED_SEED, SHIPPED_SIZE};

fn main() -> std::io::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (jsonl, conllu) = render(&long_distance_corpus(SHIPPED_SIZE, SHIPPED_SEED));
    std::fs::write(dir.join("synthetic_aste.jsonl"), jsonl)?;
    std::fs::write(dir.join("synthetic_aste.conllu"), conllu)?;
    Ok(())
}
