use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes a sequence of fields, each terminated by a unit separator (0x1F),
/// so that `["ab", "c"]` and `["a", "bc"]` never collide.
pub fn sha256_fields<'a, I>(fields: I) -> String
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut hasher = Sha256::new();
    for field in fields {
        hasher.update(field);
        hasher.update([0x1f]);
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_digest() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn field_boundaries_are_significant() {
        let a = sha256_fields([b"ab".as_slice(), b"c".as_slice()]);
        let b = sha256_fields([b"a".as_slice(), b"bc".as_slice()]);
        assert_ne!(a, b);
    }
}
