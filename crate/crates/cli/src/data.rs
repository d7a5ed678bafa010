//! Data directory layout shared by the subcommands.
//!
//! ```text
//! DIR/vocab.txt              one token per line, specials first
//! DIR/{train,dev,test}.tsv   utt_id<TAB>transcript
//! DIR/feats/{utt_id}.lstf    network-ready (spliced, subsampled) features
//! DIR/external.txt           external text pool, one sentence per line
//! DIR/lm_text.txt            prepared teacher training text
//! DIR/selection.tsv          score<TAB>pool index<TAB>sentence, best first
//! DIR/held_out.txt           in-domain text for perplexity, when available
//! ```

use std::path::{Path, PathBuf};

use lst_core::corpus::text::{read_transcripts, write_transcripts};
use lst_core::corpus::Vocab;
use lst_core::frontend::{read_feature_cache, write_feature_cache, Utterance};
use lst_core::{Error, Result};

pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: &Path) -> Self {
        DataDir { root: root.to_path_buf() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn feature_path(&self, id: &str) -> PathBuf {
        self.root.join("feats").join(format!("{id}.lstf"))
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::read(&self.path("vocab.txt"))
    }

    pub fn create(&self) -> Result<()> {
        let feats = self.root.join("feats");
        std::fs::create_dir_all(&feats).map_err(|e| Error::Io { path: feats, source: e })
    }

    pub fn write_set(&self, set: &str, utts: &[Utterance], vocab: &Vocab) -> Result<()> {
        let rows: Vec<(String, String)> = utts.iter().map(|u| (u.id.clone(), vocab.decode(&u.tokens))).collect();
        for u in utts {
            write_feature_cache(&self.feature_path(&u.id), &u.features)?;
        }
        write_transcripts(&self.path(&format!("{set}.tsv")), &rows)
    }

    pub fn transcripts(&self, set: &str) -> Result<Vec<(String, String)>> {
        read_transcripts(&self.path(&format!("{set}.tsv")))
    }

    pub fn load_set(&self, set: &str, vocab: &Vocab) -> Result<Vec<Utterance>> {
        self.transcripts(set)?
            .into_iter()
            .map(|(id, text)| {
                Ok(Utterance {
                    features: read_feature_cache(&self.feature_path(&id))?,
                    tokens: vocab.encode_chars(&text, true),
                    id,
                })
            })
            .collect()
    }
}
