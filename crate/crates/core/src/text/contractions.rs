use super::Sentence;

/// Lowercase contraction → expansion.
const TABLE: &[(&str, &str)] = &[
    ("ain't", "am not"),
    ("aren't", "are not"),
    ("can't", "cannot"),
    ("can't've", "cannot have"),
    ("could've", "could have"),
    ("couldn't", "could not"),
    ("didn't", "did not"),
    ("doesn't", "does not"),
    ("don't", "do not"),
    ("hadn't", "had not"),
    ("hasn't", "has not"),
    ("haven't", "have not"),
    ("he'd", "he would"),
    ("he'll", "he will"),
    ("he's", "he is"),
    ("here's", "here is"),
    ("how's", "how is"),
    ("i'd", "i would"),
    ("i'll", "i will"),
    ("i'm", "i am"),
    ("i've", "i have"),
    ("isn't", "is not"),
    ("it'd", "it would"),
    ("it'll", "it will"),
    ("it's", "it is"),
    ("let's", "let us"),
    ("might've", "might have"),
    ("mightn't", "might not"),
    ("must've", "must have"),
    ("mustn't", "must not"),
    ("needn't", "need not"),
    ("o'clock", "of the clock"),
    ("shan't", "shall not"),
    ("she'd", "she would"),
    ("she'll", "she will"),
    ("she's", "she is"),
    ("should've", "should have"),
    ("shouldn't", "should not"),
    ("that'd", "that would"),
    ("that's", "that is"),
    ("there'd", "there would"),
    ("there's", "there is"),
    ("they'd", "they would"),
    ("they'll", "they will"),
    ("they're", "they are"),
    ("they've", "they have"),
    ("wasn't", "was not"),
    ("we'd", "we would"),
    ("we'll", "we will"),
    ("we're", "we are"),
    ("we've", "we have"),
    ("weren't", "were not"),
    ("what'll", "what will"),
    ("what're", "what are"),
    ("what's", "what is"),
    ("what've", "what have"),
    ("when's", "when is"),
    ("where's", "where is"),
    ("who'll", "who will"),
    ("who's", "who is"),
    ("who've", "who have"),
    ("why's", "why is"),
    ("won't", "will not"),
    ("would've", "would have"),
    ("wouldn't", "would not"),
    ("y'all", "you all"),
    ("you'd", "you would"),
    ("you'll", "you will"),
    ("you're", "you are"),
    ("you've", "you have"),
];

/// Replaces every contraction in the lookup table, preserving the case of
/// the first letter. Word count is recomputed.
pub fn expand_contractions(sentence: &Sentence) -> Sentence {
    let expanded: Vec<String> = sentence.text().split_whitespace().map(expand_token).collect();
    Sentence::new(&expanded.join(" "), sentence.origin())
}

fn expand_token(token: &str) -> String {
    let normalized = token.replace(['\u{2019}', '\u{2018}'], "'");
    let start = normalized
        .find(|c: char| c.is_alphanumeric())
        .unwrap_or(normalized.len());
    let end = normalized.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + 1);
    if start >= end {
        return token.to_string();
    }
    let (prefix, rest) = normalized.split_at(start);
    let (word, suffix) = rest.split_at(end - start);
    let lower = word.to_lowercase();
    let Some(&(_, expansion)) = TABLE.iter().find(|(c, _)| *c == lower) else {
        return token.to_string();
    };
    let expansion = if word.chars().all(|c| !c.is_alphabetic() || c.is_uppercase()) && word.len() > 1 {
        expansion.to_uppercase()
    } else if word.starts_with(char::is_uppercase) || lower.starts_with("i'") {
        capitalize(expansion)
    } else {
        expansion.to_string()
    };
    format!("{prefix}{expansion}{suffix}")
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
/// True if any token of `text` is a contraction from the table.
pub(crate) fn contains_contraction(text: &str) -> bool {
    text.split_whitespace().any(|t| expand_token(t) != t)
}
