use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RecordId, TokenSet, Tokenizer};
use crate::error::Result;
use crate::ppjoin::document_frequencies;

use super::backend::{CiphertextHandle, PublicKeyId, ShareId, ThresholdBackend};
use super::field::encode_token;

/// A record as uploaded: only its id, owner and token count are in clear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedRecord {
    pub record_id: RecordId,
    pub owner_id: usize,
    pub token_handles: Vec<CiphertextHandle>,
}

impl EncryptedRecord {
    pub fn length(&self) -> usize {
        self.token_handles.len()
    }
}

/// Everything a party sends to the host.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyUpload {
    pub owner_id: usize,
    pub records: Vec<EncryptedRecord>,
    /// Local document frequencies keyed by encrypted token.
    pub ordering: Vec<(CiphertextHandle, usize)>,
}

/// A data owner holding one dataset and one key share.
#[derive(Clone, Debug)]
pub struct Party {
    pub id: usize,
    pub share: ShareId,
    dataset: Dataset,
    tokenizer: Tokenizer,
}

impl Party {
    pub fn new(id: usize, share: ShareId, dataset: Dataset, tokenizer: Tokenizer) -> Self {
        Party {
            id,
            share,
            dataset,
            tokenizer,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn token_sets(&self) -> Result<Vec<TokenSet>> {
        self.tokenizer.tokenize_dataset(&self.dataset)
    }

    /// Tokenizes, counts local frequencies and encrypts both structures
    /// token by token. Entries and record tokens are shuffled so that upload
    /// order carries no plaintext order.
    pub fn local_preprocess(
        &self,
        backend: &dyn ThresholdBackend,
        pk: PublicKeyId,
        rng: &mut impl Rng,
    ) -> Result<PartyUpload> {
        let sets = self.token_sets()?;
        let freqs: HashMap<String, usize> = document_frequencies(&sets);
        let mut local: Vec<(&String, &usize)> = freqs.iter().collect();
        local.sort_unstable();
        local.shuffle(rng);
        let ordering = local
            .into_iter()
            .map(|(tok, &f)| Ok((backend.encrypt(pk, encode_token(tok))?, f)))
            .collect::<Result<Vec<_>>>()?;

        let mut records = Vec::with_capacity(sets.len());
        for set in &sets {
            let mut tokens: Vec<&String> = set.tokens.iter().collect();
            tokens.shuffle(rng);
            let token_handles = tokens
                .into_iter()
                .map(|t| backend.encrypt(pk, encode_token(t)))
                .collect::<Result<Vec<_>>>()?;
            records.push(EncryptedRecord {
                record_id: set.record_id,
                owner_id: self.id,
                token_handles,
            });
        }
        records.shuffle(rng);
        Ok(PartyUpload {
            owner_id: self.id,
            records,
            ordering,
        })
    }
}
