/// Identifies the tokenization rule; persisted with every fitted model.
pub const TOKENIZER_VERSION: &str = "lower-ws-trim-nonalnum/1";

/// Lowercases, splits on Unicode whitespace and trims non-alphanumeric characters
/// from both ends of each piece. Empty pieces are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}
