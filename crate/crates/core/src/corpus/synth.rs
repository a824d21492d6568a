use std::collections::BTreeMap;

use super::pair::{BimodalPair, Scenario};
use crate::scenarios::SeededRng;

/// Code shapes shared by every domain. `P`/`Q` are parameters, `R`/`I` locals,
/// `N` the function name, `H` a helper and `K` a small literal.
pub const TEMPLATES: [(&str, &str); 7] = [
    ("add", "fn N ( P , Q ) { let R = P + Q ; return R ; }"),
    ("sub", "fn N ( P , Q ) { let R = P - Q ; return R ; }"),
    ("scale", "fn N ( P , Q ) { let R = P * K ; return R + Q ; }"),
    ("max", "fn N ( P , Q ) { let R = P ; if ( Q > P ) { R = Q ; } return R ; }"),
    ("min", "fn N ( P , Q ) { let R = P ; if ( Q < P ) { R = Q ; } return R ; }"),
    ("loop", "fn N ( P , Q ) { let R = 0 ; let I = 0 ; while ( I < Q ) { R = R + P ; I = I + 1 ; } return R ; }"),
    ("call", "fn N ( P , Q ) { let R = H ( P , Q ) ; return R ; }"),
];

/// Comment frames built from stopwords and slots only.
const FRAMES: [&str; 5] = [
    "{verb} the {op} of the {adj} {stem} .",
    "{verb} {op} for a {adj} {stem} .",
    "{verb} the {adj} {stem} {op} .",
    "{verb} the {op} of the {stem} .",
    "{verb} the {op} of each {adj} {stem} , if it is {adj2} .",
];

const LITERALS: [&str; 4] = ["2", "3", "4", "10"];

/// Word pools for one synthetic domain. Two domains with disjoint pools share
/// only stopwords, punctuation, keywords and literals.
#[derive(Clone, Debug)]
pub struct SynthDomain {
    pub tag: &'static str,
    /// (comment verb, function-name prefix)
    pub verbs: &'static [(&'static str, &'static str)],
    pub stems: &'static [&'static str],
    pub adjectives: &'static [&'static str],
    /// Two comment words per entry of `TEMPLATES`, in the same order.
    pub op_words: &'static [[&'static str; 2]; 7],
    pub first_params: &'static [&'static str],
    pub second_params: &'static [&'static str],
    pub results: &'static [&'static str],
    pub counters: &'static [&'static str],
    pub helpers: &'static [&'static str],
}

impl SynthDomain {
    pub fn a() -> Self {
        SynthDomain {
            tag: "a",
            verbs: &[("computes", "compute"), ("returns", "get"), ("finds", "find"), ("builds", "make")],
            stems: &[
                "area", "volume", "radius", "width", "height", "length", "angle", "weight", "price", "cost",
                "balance", "score", "offset", "ratio", "speed", "depth", "size", "level", "budget", "income",
                "salary", "distance", "perimeter", "slope", "mass", "density", "energy", "pressure", "velocity",
                "torque", "voltage", "charge", "interest", "revenue", "payment", "discount", "inventory",
                "quantity", "duration", "latitude",
            ],
            adjectives: &["new", "current", "final", "initial", "gross", "net", "local", "daily"],
            op_words: &[
                ["sum", "addition"],
                ["difference", "gap"],
                ["product", "multiple"],
                ["maximum", "peak"],
                ["minimum", "least"],
                ["accumulation", "series"],
                ["adjustment", "correction"],
            ],
            first_params: &["a", "b", "c", "d"],
            second_params: &["x", "y", "z", "w"],
            results: &["acc", "res", "out", "tmp"],
            counters: &["i", "j", "k", "n"],
            helpers: &["clip", "norm"],
        }
    }

    pub fn b() -> Self {
        SynthDomain {
            tag: "b",
            verbs: &[("produces", "produce"), ("derives", "derive"), ("obtains", "obtain"), ("emits", "emit")],
            stems: &[
                "gene", "cell", "tissue", "protein", "enzyme", "membrane", "neuron", "species", "habitat",
                "organism", "spore", "fungus", "pollen", "root", "leaf", "branch", "petal", "tempo", "melody",
                "chord", "rhythm", "pitch", "octave", "harmony", "lyric", "chorus", "verse", "ballad", "anthem",
                "drum", "violin", "cello", "flute", "piano", "guitar", "trumpet", "banjo", "harp", "tuba",
                "sonata",
            ],
            adjectives: &["vivid", "quiet", "bright", "hollow", "gentle", "rapid", "ancient", "golden"],
            op_words: &[
                ["blend", "merge"],
                ["contrast", "split"],
                ["amplification", "boost"],
                ["crest", "summit"],
                ["trough", "base"],
                ["cycle", "sweep"],
                ["filtering", "tuning"],
            ],
            first_params: &["u", "v", "s", "t"],
            second_params: &["p", "q", "r", "e"],
            results: &["agg", "cur", "val", "buf"],
            counters: &["idx", "pos", "cnt", "ptr"],
            helpers: &["trim", "wrap"],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub n: usize,
    pub domain: SynthDomain,
}

fn fill_code(template: &str, name: &str, rng: &mut SeededRng, d: &SynthDomain) -> String {
    let p = *rng.choose(d.first_params);
    let q = *rng.choose(d.second_params);
    let r = *rng.choose(d.results);
    let i = *rng.choose(d.counters);
    let h = *rng.choose(d.helpers);
    let k = *rng.choose(&LITERALS);
    template
        .split(' ')
        .map(|t| match t {
            "N" => name,
            "P" => p,
            "Q" => q,
            "R" => r,
            "I" => i,
            "H" => h,
            "K" => k,
            other => other,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `spec.n` aligned pairs: the comment names the verb, the operation and the
/// stem of the function `{prefix}_{stem}` whose body implements that operation.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Vec<BimodalPair> {
    let d = &spec.domain;
    (0..spec.n)
        .map(|k| {
            let id = format!("{}-{k:06}", d.tag);
            let mut rng = SeededRng::substream(seed, &id);
            let (verb, prefix) = *rng.choose(d.verbs);
            let stem = *rng.choose(d.stems);
            let t = rng.below(TEMPLATES.len());
            let (template_name, template) = TEMPLATES[t];
            let op = *rng.choose(&d.op_words[t]);
            let adj = *rng.choose(d.adjectives);
            let mut adj2 = *rng.choose(d.adjectives);
            while adj2 == adj {
                adj2 = *rng.choose(d.adjectives);
            }
            let frame = *rng.choose(&FRAMES);
            let comment = frame
                .replace("{verb}", verb)
                .replace("{op}", op)
                .replace("{adj2}", adj2)
                .replace("{adj}", adj)
                .replace("{stem}", stem);
            let code = fill_code(template, &format!("{prefix}_{stem}"), &mut rng, d);
            let meta = BTreeMap::from([
                ("domain".to_string(), d.tag.to_string()),
                ("template".to_string(), template_name.to_string()),
            ]);
            BimodalPair { id, comment, code, scenario: Scenario::Id, label: 1, meta }
        })
        .collect()
}
