//! Keyword and pattern lists used to recognise commercial indicators and ad
//! topics in video text. The simulator renders its text from the same lists,
//! so anything it emits is recoverable by the scanner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Topic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lexicon {
    /// Topic keywords; multi-word entries match as whole-word phrases.
    pub topic_keywords: BTreeMap<Topic, Vec<String>>,
    /// Promotional hashtags, without the leading `#`.
    pub promo_hashtags: Vec<String>,
    pub cta_phrases: Vec<String>,
    /// Brand names that count as a brand mention even without an `@`.
    pub brands: Vec<String>,
    pub endorsement_phrases: Vec<String>,
    pub qr_tokens: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        let mut topic_keywords = BTreeMap::new();
        topic_keywords.insert(
            Topic::Beauty,
            strings(&["beauty", "makeup", "skincare", "cosmetics", "clearskin", "kbeauty", "glasskin"]),
        );
        topic_keywords.insert(
            Topic::Fitness,
            strings(&[
                "fitness", "abs", "workout", "gym", "sports", "health", "nutrition", "gymtok", "supplements",
            ]),
        );
        topic_keywords.insert(
            Topic::Gaming,
            strings(&["video games", "consoles", "streamers", "gamer", "gaming", "gamerlife"]),
        );
        topic_keywords.insert(
            Topic::Politics,
            strings(&[
                "politics",
                "political news",
                "political debate",
                "voting",
                "politicians",
                "breaking news",
            ]),
        );
        Lexicon {
            topic_keywords,
            promo_hashtags: strings(&["ad", "werbung", "partnership", "collaboration", "sponsored"]),
            cta_phrases: strings(&["buy now", "shop today", "link in bio"]),
            brands: Vec::new(),
            endorsement_phrases: strings(&["product_endorsement"]),
            qr_tokens: strings(&["qr_code"]),
        }
    }
}

impl Lexicon {
    pub fn keywords(&self, topic: Topic) -> &[String] {
        self.topic_keywords.get(&topic).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Adds the entries of `other` to this lexicon.
    pub fn extend(&mut self, other: &Lexicon) {
        for (topic, words) in &other.topic_keywords {
            let entry = self.topic_keywords.entry(*topic).or_default();
            for w in words {
                if !entry.contains(w) {
                    entry.push(w.clone());
                }
            }
        }
        for (mine, theirs) in [
            (&mut self.promo_hashtags, &other.promo_hashtags),
            (&mut self.cta_phrases, &other.cta_phrases),
            (&mut self.brands, &other.brands),
            (&mut self.endorsement_phrases, &other.endorsement_phrases),
            (&mut self.qr_tokens, &other.qr_tokens),
        ] {
            for w in theirs {
                if !mine.contains(w) {
                    mine.push(w.clone());
                }
            }
        }
    }
}

/// Lowercases and splits on anything that is not alphanumeric or `_`.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Counts whole-word occurrences of `phrase` in a word sequence.
pub fn count_phrase(haystack: &[String], phrase: &str) -> usize {
    let needle = words(phrase);
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle.as_slice()).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrases_match_on_word_boundaries() {
        let text = words("New VIDEO games drop! #gaming abs? absolutely");
        assert_eq!(count_phrase(&text, "video games"), 1);
        assert_eq!(count_phrase(&text, "gaming"), 1);
        assert_eq!(count_phrase(&text, "abs"), 1);
        assert_eq!(count_phrase(&text, "games drop"), 1);
        assert_eq!(count_phrase(&text, "gamer"), 0);
    }

    #[test]
    fn topic_lists_do_not_overlap() {
        let lex = Lexicon::default();
        for a in Topic::INTERESTS {
            for b in Topic::INTERESTS {
                if a < b {
                    for w in lex.keywords(a) {
                        assert!(!lex.keywords(b).contains(w), "{w} in {a} and {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn extend_is_a_set_union() {
        let mut lex = Lexicon::default();
        let mut extra = Lexicon {
            topic_keywords: BTreeMap::new(),
            promo_hashtags: vec!["ad".into(), "anzeige".into()],
            cta_phrases: vec![],
            brands: vec!["glowlab".into()],
            endorsement_phrases: vec![],
            qr_tokens: vec![],
        };
        extra.topic_keywords.insert(Topic::Beauty, vec!["lipstick".into(), "makeup".into()]);
        lex.extend(&extra);
        assert_eq!(lex.promo_hashtags.iter().filter(|h| *h == "ad").count(), 1);
        assert!(lex.promo_hashtags.contains(&"anzeige".to_string()));
        assert!(lex.keywords(Topic::Beauty).contains(&"lipstick".to_string()));
        assert_eq!(lex.brands, vec!["glowlab".to_string()]);
    }
}
