//! Attribute-templated captions and the inverse keyword parser.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{AttrKey, AttrValue, Attributes, ShapeSpec};

/// Template key for an attribute value, e.g. `legs=4` or `style=post/1`.
pub fn value_key(value: AttrValue, leg_count: u8) -> String {
    use AttrValue as V;
    let single = if leg_count == 1 { "/1" } else { "" };
    match value {
        V::Chair => "category=chair".into(),
        V::Table => "category=table".into(),
        V::Wide => "width=wide".into(),
        V::Narrow => "width=narrow".into(),
        V::High => "height=high".into(),
        V::Low => "height=low".into(),
        V::Thick => "thickness=thick".into(),
        V::Thin => "thickness=thin".into(),
        V::Round => "top=round".into(),
        V::Square => "top=square".into(),
        V::Legs(n) => format!("legs={n}"),
        V::Straight => format!("style=straight{single}"),
        V::Cross => format!("style=cross{single}"),
        V::Post => format!("style=post{single}"),
        V::NoBack => "back=none".into(),
        V::ShortBack => "back=short".into(),
        V::TallBack => "back=tall".into(),
        V::Armrests => "armrests=yes".into(),
        V::Armless => "armrests=no".into(),
        V::Slats(n) => format!("slats={n}"),
    }
}

/// Phrase templates per attribute value key. Placeholders: `{obj}` category
/// noun, `{surface}` seat or top, `{num}` the value's number as a word or digits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionTemplates {
    /// Adjectives usable in the opening noun phrase.
    pub adjectives: BTreeMap<String, Vec<String>>,
    /// Prepositional phrases that may attach to the opening noun phrase.
    pub attached: BTreeMap<String, Vec<String>>,
    /// Stand-alone sentences.
    pub sentences: BTreeMap<String, Vec<String>>,
}

fn table(rows: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    rows.iter()
        .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
        .collect()
}

impl Default for CaptionTemplates {
    fn default() -> Self {
        let adjectives = table(&[
            ("width=wide", &["wide"]),
            ("width=narrow", &["narrow"]),
            ("height=high", &["high"]),
            ("height=low", &["low"]),
            ("top=round", &["round"]),
            ("top=square", &["square"]),
            ("back=none", &["backless"]),
            ("armrests=no", &["armless"]),
        ]);
        let attached = table(&[
            ("thickness=thick", &["with a thick {surface}"]),
            ("thickness=thin", &["with a thin {surface}"]),
            ("top=round", &["with a round top"]),
            ("top=square", &["with a square top"]),
            ("legs=4", &["with {num} legs"]),
            ("legs=3", &["with {num} legs"]),
            ("legs=1", &["with {num} leg", "with a single leg"]),
            ("style=straight", &["with straight legs"]),
            ("style=post", &["with round legs"]),
            ("style=cross", &["with cross bars"]),
            ("style=straight/1", &["with a straight leg"]),
            ("style=post/1", &["with a round leg"]),
            ("style=cross/1", &["with cross bars at the base"]),
            ("back=short", &["with a short back"]),
            ("back=tall", &["with a tall back"]),
            ("armrests=yes", &["with armrests", "with arms"]),
            ("slats=2", &["with {num} slats in the back"]),
            ("slats=3", &["with {num} slats in the back"]),
        ]);
        let sentences = table(&[
            ("width=wide", &["it is wide", "the {obj} is wide"]),
            ("width=narrow", &["it is narrow", "the {obj} is narrow"]),
            ("height=high", &["the {surface} is high", "it stands high"]),
            ("height=low", &["the {surface} is low", "it sits low"]),
            ("thickness=thick", &["the {surface} is thick", "it has a thick {surface}"]),
            ("thickness=thin", &["the {surface} is thin", "it has a thin {surface}"]),
            ("top=round", &["the top is round"]),
            ("top=square", &["the top is square"]),
            ("legs=4", &["it has {num} legs", "it stands on {num} legs"]),
            ("legs=3", &["it has {num} legs", "it stands on {num} legs"]),
            ("legs=1", &["it has {num} leg", "it stands on a single leg"]),
            ("style=straight", &["the legs are straight"]),
            ("style=post", &["the legs are round"]),
            ("style=cross", &["the legs have cross bars"]),
            ("style=straight/1", &["the leg is straight"]),
            ("style=post/1", &["the leg is round"]),
            ("style=cross/1", &["the base has cross bars"]),
            ("back=none", &["it has no back", "it is backless"]),
            ("back=short", &["the back is short"]),
            ("back=tall", &["the back is tall"]),
            ("armrests=yes", &["it has armrests"]),
            ("armrests=no", &["it is armless", "it has no armrests"]),
            ("slats=0", &["the back is solid"]),
            ("slats=2", &["the back has {num} slats"]),
            ("slats=3", &["the back has {num} slats"]),
        ]);
        Self {
            adjectives,
            attached,
            sentences,
        }
    }
}

const NUMBER_WORDS: [&str; 5] = ["zero", "one", "two", "three", "four"];

fn number_of(value: AttrValue) -> Option<u8> {
    match value {
        AttrValue::Legs(n) | AttrValue::Slats(n) => Some(n),
        _ => None,
    }
}

fn fill<R: Rng + ?Sized>(template: &str, spec: &ShapeSpec, value: AttrValue, rng: &mut R) -> String {
    let mut s = template
        .replace("{obj}", spec.category.noun())
        .replace("{surface}", spec.category.surface());
    if let Some(n) = number_of(value) {
        let num = if rng.gen_bool(0.5) {
            NUMBER_WORDS[n as usize].to_string()
        } else {
            n.to_string()
        };
        s = s.replace("{num}", &num);
    }
    s
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl CaptionTemplates {
    /// Writes one caption mentioning exactly the attribute keys in `mention`
    /// (the category is always mentioned).
    pub fn caption<R: Rng + ?Sized>(&self, spec: &ShapeSpec, mention: &[AttrKey], rng: &mut R) -> String {
        let attrs = spec.attributes();
        let mut pending: Vec<AttrValue> = mention
            .iter()
            .filter(|k| **k != AttrKey::Category)
            .filter_map(|k| attrs.get(k).copied())
            .collect();
        pending.shuffle(rng);
        let key = |v: AttrValue| value_key(v, spec.leg_count);

        let mut noun_phrase = String::new();
        if rng.gen_bool(0.6) {
            if let Some(pos) = pending.iter().position(|v| self.adjectives.contains_key(&key(*v))) {
                let v = pending.remove(pos);
                let adj = self.adjectives[&key(v)].choose(rng).expect("adjective");
                noun_phrase.push_str(adj);
                noun_phrase.push(' ');
            }
        }
        noun_phrase.push_str(spec.category.noun());
        let article = if noun_phrase.starts_with(['a', 'e', 'i', 'o', 'u']) {
            "an "
        } else {
            "a "
        };
        let mut opening = format!("{article}{noun_phrase}");
        if rng.gen_bool(0.5) {
            if let Some(pos) = pending.iter().position(|v| self.attached.contains_key(&key(*v))) {
                let v = pending.remove(pos);
                let t = self.attached[&key(v)].choose(rng).expect("attached phrase");
                opening.push(' ');
                opening.push_str(&fill(t, spec, v, rng));
            }
        }
        let mut sentences = vec![opening];
        for v in pending {
            let k = key(v);
            let pool = self
                .sentences
                .get(&k)
                .or_else(|| self.attached.get(&k))
                .unwrap_or_else(|| panic!("no caption template for {k}"));
            let t = pool.choose(rng).expect("sentence template");
            sentences.push(fill(t, spec, v, rng));
        }
        let mut out = sentences
            .iter()
            .map(|s| capitalize(s))
            .collect::<Vec<_>>()
            .join(". ");
        out.push('.');
        out
    }
}

/// Lower-cased alphanumeric tokens.
pub fn caption_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn parse_number(token: &str) -> Option<u8> {
    match token {
        "one" | "1" | "single" => Some(1),
        "two" | "2" => Some(2),
        "three" | "3" => Some(3),
        "four" | "4" => Some(4),
        _ => None,
    }
}

/// Recovers the attributes a caption (or any phrase sequence built from
/// captions) mentions. Inverse of [`CaptionTemplates::caption`] on the
/// default templates.
pub fn parse_attributes(text: &str) -> Attributes {
    use AttrValue as V;
    let t = caption_tokens(text);
    let at = |i: isize| -> &str {
        if i < 0 {
            ""
        } else {
            t.get(i as usize).map(String::as_str).unwrap_or("")
        }
    };
    let mut a = Attributes::new();
    for i in 0..t.len() as isize {
        let next = at(i + 1);
        let prev2 = at(i - 2);
        match at(i) {
            "chair" => {
                a.insert(AttrKey::Category, V::Chair);
            }
            "table" => {
                a.insert(AttrKey::Category, V::Table);
            }
            "wide" => {
                a.insert(AttrKey::Width, V::Wide);
            }
            "narrow" => {
                a.insert(AttrKey::Width, V::Narrow);
            }
            "high" => {
                a.insert(AttrKey::Height, V::High);
            }
            "low" => {
                a.insert(AttrKey::Height, V::Low);
            }
            "thick" => {
                a.insert(AttrKey::Thickness, V::Thick);
            }
            "thin" => {
                a.insert(AttrKey::Thickness, V::Thin);
            }
            "square" => {
                a.insert(AttrKey::TopShape, V::Square);
            }
            "round" => {
                let legs = matches!(next, "leg" | "legs") || matches!(prev2, "leg" | "legs");
                if legs {
                    a.insert(AttrKey::LegStyle, V::Post);
                } else {
                    a.insert(AttrKey::TopShape, V::Round);
                }
            }
            "straight" => {
                a.insert(AttrKey::LegStyle, V::Straight);
            }
            "cross" => {
                a.insert(AttrKey::LegStyle, V::Cross);
            }
            "backless" => {
                a.insert(AttrKey::Back, V::NoBack);
            }
            "back" if at(i - 1) == "no" => {
                a.insert(AttrKey::Back, V::NoBack);
            }
            "short" if next == "back" || prev2 == "back" => {
                a.insert(AttrKey::Back, V::ShortBack);
            }
            "tall" if next == "back" || prev2 == "back" => {
                a.insert(AttrKey::Back, V::TallBack);
            }
            "solid" if prev2 == "back" => {
                a.insert(AttrKey::Slats, V::Slats(0));
            }
            "armless" => {
                a.insert(AttrKey::Armrests, V::Armless);
            }
            "armrests" | "arms" => {
                let v = if at(i - 1) == "no" { V::Armless } else { V::Armrests };
                a.insert(AttrKey::Armrests, v);
            }
            tok => {
                if let Some(n) = parse_number(tok) {
                    match next {
                        "leg" | "legs" => {
                            a.insert(AttrKey::LegCount, V::Legs(n));
                        }
                        "slats" => {
                            a.insert(AttrKey::Slats, V::Slats(n));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel_shapes::spec::Category;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_caption_parses_back_to_spec_attributes() {
        let templates = CaptionTemplates::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..500 {
            let cat = if i % 3 == 0 { Category::Table } else { Category::Chair };
            let spec = ShapeSpec::sample(cat, &mut rng);
            let keys: Vec<AttrKey> = spec.attributes().keys().copied().collect();
            let caption = templates.caption(&spec, &keys, &mut rng);
            assert_eq!(parse_attributes(&caption), spec.attributes(), "{caption}");
        }
    }

    #[test]
    fn parser_disambiguates_round() {
        let a = parse_attributes("A round table. The legs are round.");
        assert_eq!(a[&AttrKey::TopShape], AttrValue::Round);
        assert_eq!(a[&AttrKey::LegStyle], AttrValue::Post);
        let b = parse_attributes("a table with a round leg");
        assert_eq!(b.get(&AttrKey::TopShape), None);
        assert_eq!(b[&AttrKey::LegStyle], AttrValue::Post);
    }

    #[test]
    fn numbers_and_negations() {
        let a = parse_attributes("A chair with 4 legs. It has no armrests. The back has three slats.");
        assert_eq!(a[&AttrKey::LegCount], AttrValue::Legs(4));
        assert_eq!(a[&AttrKey::Armrests], AttrValue::Armless);
        assert_eq!(a[&AttrKey::Slats], AttrValue::Slats(3));
        let b = parse_attributes("it stands on a single leg. it has no back");
        assert_eq!(b[&AttrKey::LegCount], AttrValue::Legs(1));
        assert_eq!(b[&AttrKey::Back], AttrValue::NoBack);
    }
}
