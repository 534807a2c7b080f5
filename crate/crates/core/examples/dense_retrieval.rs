//! Chunk a corpus, build an exact inner-product index, persist it, and turn
//! the hits for a query into a budgeted context block.

use std::path::Path;

use targ::fixture::fixture_chunking;
use targ::io::read_jsonl;
use targ::pipeline::TraceReplayGenerator;
use targ::retrieval::{
    chunk_corpus, format_context, normalize, Article, EmbeddingIndex, EmbeddingSet, PassageStore,
};
use targ::Result;

fn main() -> Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let articles: Vec<Article> = read_jsonl(dir.join("corpus.jsonl"))?;
    let passages = chunk_corpus(&articles, &fixture_chunking(), 0)?;
    println!("{} articles -> {} passages", articles.len(), passages.len());

    let index = EmbeddingSet::load(dir.join("embeddings.bin"))?.into_index()?;
    let path = std::env::temp_dir().join("targ-example-index.bin");
    index.save(&path)?;
    let reloaded = EmbeddingIndex::load(&path)?;
    assert_eq!(reloaded.to_bytes(), index.to_bytes());
    println!("index: {} x {} saved to {}", index.len(), index.dim(), path.display());

    let generator = TraceReplayGenerator::load(dir.join("trace.jsonl"))?;
    let query = &generator.queries()[3];
    let embedding = normalize(query.embedding.as_deref().expect("fixture has embeddings"))?;
    println!("\n{}", query.question);
    let hits = reloaded.search(&embedding, 3)?;
    for hit in &hits {
        println!("  id {:3}  score {:.4}", hit.id, hit.score);
    }

    let store = PassageStore::new(passages)?;
    let block = format_context(&hits, &store, 40)?;
    println!(
        "\ncontext ({} tokens, truncated: {}):\n{}",
        block.token_count, block.truncated, block.text
    );
    Ok(())
}
