//! Binary checkpoint of an [`EmbeddingState`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size             field
//! 0       8                magic b"CFLSEMB1"
//! 8       8                dim (u64)
//! 16      8                num_users (u64)
//! 24      8                num_items (u64)
//! 32      8*U*d            user matrix, row-major f64
//! ...     8*I*d            item matrix, row-major f64
//! ```

use std::path::Path;

use crate::backbone::EmbeddingState;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::matrix::Matrix;

const MAGIC: &[u8; 8] = b"CFLSEMB1";
const HEADER_LEN: usize = 32;

pub fn encode(state: &EmbeddingState) -> Vec<u8> {
    let floats = state.users.as_slice().len() + state.items.as_slice().len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * floats);
    out.extend_from_slice(MAGIC);
    for n in [state.dim(), state.num_users(), state.num_items()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for x in state.users.as_slice().iter().chain(state.items.as_slice()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<EmbeddingState> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("missing header".into()));
    }
    let field = |k: usize| {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[8 + 8 * k..16 + 8 * k]);
        u64::from_le_bytes(b) as usize
    };
    let (dim, nu, ni) = (field(0), field(1), field(2));
    let expected = (nu + ni)
        .checked_mul(dim)
        .and_then(|f| f.checked_mul(8))
        .and_then(|b| b.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(bad(format!(
            "header says {nu} users, {ni} items, dim {dim} but file has {} bytes",
            bytes.len()
        )));
    }
    let mut floats = bytes[HEADER_LEN..].chunks_exact(8).map(|c| {
        let mut b = [0u8; 8];
        b.copy_from_slice(c);
        f64::from_le_bytes(b)
    });
    let users: Vec<f64> = floats.by_ref().take(nu * dim).collect();
    let items: Vec<f64> = floats.collect();
    EmbeddingState::new(
        Matrix::from_vec(nu, dim, users),
        Matrix::from_vec(ni, dim, items),
    )
    .map_err(|e| bad(e.to_string()))
}

pub fn save(state: &EmbeddingState, path: &Path) -> Result<()> {
    write_atomic(path, &encode(state))
}

pub fn load(path: &Path) -> Result<EmbeddingState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::init_embeddings;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut s = init_embeddings(3, 4, 5, 42, 0.3).unwrap();
        s.users.row_mut(0)[0] = -0.0;
        s.items.row_mut(1)[2] = f64::MIN_POSITIVE / 4.0;
        let back = decode(&encode(&s), Path::new("mem")).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.users), bits(&s.users));
        assert_eq!(bits(&back.items), bits(&s.items));
    }

    #[test]
    fn truncated_file_rejected() {
        let s = init_embeddings(2, 2, 2, 1, 0.1).unwrap();
        let bytes = encode(&s);
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        assert!(decode(b"nonsense", Path::new("mem")).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let s = init_embeddings(2, 3, 4, 5, 0.1).unwrap();
        save(&s, &path).unwrap();
        assert_eq!(load(&path).unwrap(), s);
    }
}
