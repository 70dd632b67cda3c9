//! Lightweight inflectional stemmer in the spirit of Krovetz.
//!
//! The original KStem consults a dictionary before stripping a suffix. This
//! version has no dictionary: it only undoes plural, past-tense and
//! progressive inflections using orthographic rules plus a small exception
//! table. Derivational suffixes (`-ion`, `-ness`, `-ly`, ...) are left alone,
//! which keeps stems readable and close to dictionary words.

/// Irregular forms and words the suffix rules would mangle.
const EXCEPTIONS: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("oxen", "ox"),
    ("people", "people"),
    ("news", "news"),
    ("series", "series"),
    ("species", "species"),
    ("during", "during"),
    ("something", "something"),
    ("nothing", "nothing"),
    ("anything", "anything"),
    ("everything", "everything"),
    ("morning", "morning"),
    ("evening", "evening"),
    ("ceiling", "ceiling"),
    ("wedding", "wedding"),
    ("feed", "feed"),
    ("need", "need"),
    ("speed", "speed"),
    ("seed", "seed"),
    ("bed", "bed"),
    ("red", "red"),
    ("shed", "shed"),
    ("hundred", "hundred"),
    ("kindred", "kindred"),
    ("naked", "naked"),
    ("sacred", "sacred"),
    ("wicked", "wicked"),
    ("crooked", "crooked"),
    ("gas", "gas"),
    ("lens", "lens"),
    ("bias", "bias"),
    ("atlas", "atlas"),
    ("canvas", "canvas"),
    ("christmas", "christmas"),
    ("always", "always"),
    ("perhaps", "perhaps"),
    ("whereas", "whereas"),
    ("oscars", "oscar"),
    ("data", "data"),
    ("criteria", "criterion"),
    ("phenomena", "phenomenon"),
    ("analyses", "analysis"),
    ("crises", "crisis"),
    ("theses", "thesis"),
    ("indices", "index"),
    ("matrices", "matrix"),
    ("lives", "life"),
    ("wives", "wife"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("wolves", "wolf"),
    ("halves", "half"),
    ("shelves", "shelf"),
    ("thieves", "thief"),
    ("dies", "die"),
    ("lies", "lie"),
    ("ties", "tie"),
    ("pies", "pie"),
];

fn is_vowel(word: &[u8], i: usize) -> bool {
    match word[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        b'y' => i > 0 && !is_vowel(word, i - 1),
        _ => false,
    }
}

fn has_vowel(word: &[u8]) -> bool {
    (0..word.len()).any(|i| is_vowel(word, i))
}

/// Number of vowel-consonant sequences, as in Porter's measure.
fn measure(word: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..word.len() {
        let v = is_vowel(word, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

/// consonant-vowel-consonant ending where the final consonant is not w, x or y.
fn ends_cvc(word: &[u8]) -> bool {
    let n = word.len();
    n >= 3
        && !is_vowel(word, n - 1)
        && is_vowel(word, n - 2)
        && !is_vowel(word, n - 3)
        && !matches!(word[n - 1], b'w' | b'x' | b'y')
}

fn ends_double_consonant(word: &[u8]) -> bool {
    let n = word.len();
    n >= 2 && word[n - 1] == word[n - 2] && !is_vowel(word, n - 1)
}

/// Repairs a stem after `-ed` / `-ing` removal.
fn restore_verb(stem: &str) -> String {
    let b = stem.as_bytes();
    if ends_double_consonant(b) && !matches!(b[b.len() - 1], b'l' | b's' | b'z') {
        return stem[..stem.len() - 1].to_string();
    }
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") {
        return format!("{stem}e");
    }
    if measure(b) == 1 && ends_cvc(b) {
        return format!("{stem}e");
    }
    stem.to_string()
}

fn strip_plural(word: &str) -> Option<String> {
    let n = word.len();
    if n <= 3 || !word.ends_with('s') {
        return None;
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return None;
    }
    if word.ends_with("ies") {
        return Some(format!("{}y", &word[..n - 3]));
    }
    if word.ends_with("sses")
        || word.ends_with("xes")
        || word.ends_with("ches")
        || word.ends_with("shes")
        || word.ends_with("zzes")
    {
        return Some(word[..n - 2].to_string());
    }
    if word.ends_with("oes") && n > 4 {
        return Some(word[..n - 2].to_string());
    }
    Some(word[..n - 1].to_string())
}

fn strip_past(word: &str) -> Option<String> {
    let n = word.len();
    if n <= 4 || !word.ends_with("ed") {
        return None;
    }
    if word.ends_with("ied") {
        return Some(format!("{}y", &word[..n - 3]));
    }
    if word.ends_with("eed") {
        return Some(word[..n - 1].to_string());
    }
    let stem = &word[..n - 2];
    has_vowel(stem.as_bytes()).then(|| restore_verb(stem))
}

fn strip_progressive(word: &str) -> Option<String> {
    let n = word.len();
    if n <= 5 || !word.ends_with("ing") {
        return None;
    }
    let stem = &word[..n - 3];
    if stem.ends_with('y') && n == 6 {
        // dying, lying, tying
        return None;
    }
    has_vowel(stem.as_bytes()).then(|| restore_verb(stem))
}

/// Stems one lowercase word.
pub fn stem(word: &str) -> String {
    if word.len() <= 3 || !word.is_ascii() || word.bytes().any(|c| !c.is_ascii_lowercase()) {
        return word.to_string();
    }
    if let Some((_, s)) = EXCEPTIONS.iter().find(|(w, _)| *w == word) {
        return (*s).to_string();
    }
    strip_plural(word)
        .or_else(|| strip_past(word))
        .or_else(|| strip_progressive(word))
        .unwrap_or_else(|| word.to_string())
}
