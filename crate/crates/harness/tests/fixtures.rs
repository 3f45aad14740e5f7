use distill_core::metrics::{use_similarity, Embedder, Oov};

const TABLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/embeddings.txt");

#[test]
fn shipped_embedding_table_loads_and_ranks_paraphrases_higher() {
    let emb = Embedder::load_token_table(TABLE, Oov::Hashed(0)).unwrap();
    assert_eq!(emb.dim(), 16);
    let close = use_similarity("gets the value", "returns the value", &emb).unwrap();
    let far = use_similarity("gets the value", "deletes the file", &emb).unwrap();
    assert!(close > far, "{close} <= {far}");
    assert!((use_similarity("sets the name", "sets the name", &emb).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn shipped_pilot_config_parses() {
    let c = distill_harness::config::RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/pilot.toml")).unwrap();
    assert_eq!(c.tiers, [1000, 4000]);
    let specs = c.model_specs().unwrap();
    assert_eq!((specs[0].config.d, specs[0].config.epochs), (64, 15));
}
