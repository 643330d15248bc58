//! Seeded generator of English-like text for training runs that have no
//! external corpus. Sentences come from a small phrase grammar with
//! Zipf-weighted word choice, so the text has real local structure
//! (agreement, function words, punctuation) for a byte model to learn.

use crate::numerics::Rng;

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every", "one", "some", "no"];
const ADJECTIVES: &[&str] = &[
    "small", "old", "quiet", "bright", "green", "heavy", "early", "strange", "warm", "narrow", "gentle", "broken",
    "distant", "simple", "careful", "golden", "empty", "sudden", "loyal", "pale",
];
const NOUNS: &[&str] = &[
    "river", "house", "teacher", "garden", "letter", "child", "window", "farmer", "city", "road", "bird", "engine",
    "village", "doctor", "market", "storm", "horse", "library", "island", "painter", "bridge", "kitchen", "soldier",
    "forest", "machine", "sailor", "mountain", "lamp", "clock", "stranger",
];
const VERBS: &[&str] = &[
    "sees", "finds", "carries", "remembers", "builds", "follows", "opens", "watches", "paints", "crosses", "keeps",
    "leaves", "answers", "repairs", "visits", "hears", "writes", "sells", "guards", "loves",
];
const INTRANSITIVE: &[&str] = &[
    "sleeps", "waits", "laughs", "returns", "wanders", "sings", "falls", "listens", "rests", "works",
];
const ADVERBS: &[&str] = &["slowly", "again", "quietly", "at dawn", "every morning", "once more", "alone", "today"];
const PREPOSITIONS: &[&str] = &["near", "behind", "under", "across", "beside", "toward", "inside", "beyond"];
const CONJUNCTIONS: &[&str] = &["and", "but", "while", "because", "so", "although"];
const NAMES: &[&str] = &["Anna", "Tomas", "Mira", "Jonah", "Elena", "Ravi", "Greta", "Oskar"];

struct Writer {
    rng: Rng,
    out: String,
}

impl Writer {
    /// Zipf-like pick: index `i` has weight `1/(i+1)`.
    fn pick(&mut self, words: &[&'static str]) -> &'static str {
        let total: f64 = (1..=words.len()).map(|i| 1.0 / i as f64).sum();
        let mut u = self.rng.uniform() * total;
        for (i, w) in words.iter().enumerate() {
            u -= 1.0 / (i + 1) as f64;
            if u <= 0.0 {
                return w;
            }
        }
        words[words.len() - 1]
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.uniform() < p
    }

    fn noun_phrase(&mut self) -> String {
        if self.chance(0.12) {
            return self.pick(NAMES).to_string();
        }
        let mut np = self.pick(DETERMINERS).to_string();
        if self.chance(0.45) {
            np.push(' ');
            np.push_str(self.pick(ADJECTIVES));
        }
        np.push(' ');
        np.push_str(self.pick(NOUNS));
        if np.starts_with("a ") && np[2..].starts_with(['a', 'e', 'i', 'o', 'u']) {
            np.replace_range(0..1, "an");
        }
        np
    }

    fn clause(&mut self) -> String {
        let mut c = self.noun_phrase();
        c.push(' ');
        if self.chance(0.3) {
            c.push_str(self.pick(INTRANSITIVE));
        } else {
            c.push_str(self.pick(VERBS));
            c.push(' ');
            c.push_str(&self.noun_phrase());
        }
        if self.chance(0.35) {
            c.push(' ');
            c.push_str(self.pick(PREPOSITIONS));
            c.push(' ');
            c.push_str(&self.noun_phrase());
        }
        if self.chance(0.25) {
            c.push(' ');
            c.push_str(self.pick(ADVERBS));
        }
        c
    }

    fn sentence(&mut self) {
        let mut s = self.clause();
        if self.chance(0.3) {
            s.push_str(", ");
            s.push_str(self.pick(CONJUNCTIONS));
            s.push(' ');
            s.push_str(&self.clause());
        }
        let mut chars = s.chars();
        if let Some(first) = chars.next() {
            self.out.extend(first.to_uppercase());
            self.out.push_str(chars.as_str());
        }
        let end = if self.chance(0.08) { '?' } else { '.' };
        self.out.push(end);
    }
}

/// Exactly `n_bytes` of ASCII text, a pure function of `seed`.
pub fn synthetic_corpus(n_bytes: usize, seed: u64) -> Vec<u8> {
    let mut w = Writer {
        rng: Rng::named(seed, "corpus"),
        out: String::with_capacity(n_bytes + 256),
    };
    let mut in_paragraph = 0;
    while w.out.len() < n_bytes {
        w.sentence();
        in_paragraph += 1;
        if in_paragraph >= 3 && w.chance(0.2) {
            w.out.push_str("\n\n");
            in_paragraph = 0;
        } else {
            w.out.push(' ');
        }
    }
    let mut bytes = w.out.into_bytes();
    bytes.truncate(n_bytes);
    bytes
}
