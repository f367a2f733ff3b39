//! Seeded generator for a small synthetic patent corpus.
//!
//! Every IPC section has a fixed "world": systems with a purpose,
//! components with a category and a characteristic property, and
//! materials. Documents combine these facts into abstracts built from
//! relation cue sentences, templated titles and numbered claims. World
//! facts (purposes, categories, properties) are stated in only some of the
//! documents that mention them, so recalling them is a matter of knowledge
//! rather than copying.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{parse_corpus, IpcSection, PatentDoc};
use crate::eval::McqItem;
use crate::kgraph::{aggregate, extract_triples, verbalize, KnowledgeGraph, PatternSet, RelationType};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Seed of the bundled corpus file.
pub const BUNDLED_SEED: u64 = 0;
pub const DOCS_PER_SECTION: usize = 40;

const BUNDLED: &str = include_str!("../data/synthetic_patents.jsonl");

/// The bundled corpus (`generate_corpus(BUNDLED_SEED, DOCS_PER_SECTION)`).
pub fn bundled_corpus() -> Vec<PatentDoc> {
    parse_corpus(BUNDLED).expect("bundled corpus is valid")
}

pub fn bundled_corpus_text() -> &'static str {
    BUNDLED
}

struct World {
    systems: [(&'static str, &'static str); 4],
    components: [(&'static str, &'static str); 8],
    materials: [&'static str; 4],
}

const PROPERTIES: [&str; 8] = [
    "high stiffness",
    "low friction",
    "corrosion resistance",
    "low weight",
    "high efficiency",
    "thermal stability",
    "low noise",
    "high precision",
];

const CLOSINGS: [&str; 4] = [
    "The arrangement improves reliability and reduces maintenance cost.",
    "The design simplifies assembly and lowers production cost.",
    "The configuration increases service life under continuous operation.",
    "The layout reduces energy consumption during normal operation.",
];

fn world(section: IpcSection) -> World {
    use IpcSection::*;
    match section {
        A => World {
            systems: [
                ("inhaler", "drug delivery"),
                ("infusion pump", "fluid delivery"),
                ("hearing aid", "sound amplification"),
                ("wheelchair", "patient mobility"),
            ],
            components: [
                ("nozzle", "outlet element"),
                ("reservoir", "storage vessel"),
                ("dose counter", "counting mechanism"),
                ("check valve", "valve"),
                ("microphone", "acoustic sensor"),
                ("battery", "power source"),
                ("armrest", "support element"),
                ("caster wheel", "wheel"),
            ],
            materials: ["silicone", "titanium", "polypropylene", "stainless steel"],
        },
        B => World {
            systems: [
                ("conveyor", "material handling"),
                ("hydraulic press", "metal forming"),
                ("robot arm", "part assembly"),
                ("drone", "aerial transport"),
            ],
            components: [
                ("belt", "flexible element"),
                ("roller", "rotary element"),
                ("gripper", "end effector"),
                ("servo motor", "motor"),
                ("propeller", "rotary element"),
                ("ram", "linear actuator"),
                ("frame", "support structure"),
                ("controller", "control unit"),
            ],
            materials: ["aluminium", "rubber", "carbon fiber", "cast iron"],
        },
        C => World {
            systems: [
                ("reactor", "polymer synthesis"),
                ("distillation column", "solvent recovery"),
                ("electrolyzer", "hydrogen production"),
                ("furnace", "alloy melting"),
            ],
            components: [
                ("catalyst bed", "reaction zone"),
                ("heat exchanger", "thermal device"),
                ("membrane", "separator"),
                ("electrode", "conductor"),
                ("crucible", "vessel"),
                ("condenser", "thermal device"),
                ("agitator", "mixing element"),
                ("burner", "heat source"),
            ],
            materials: ["nickel", "graphite", "zeolite", "alumina"],
        },
        D => World {
            systems: [
                ("loom", "weaving"),
                ("spinning frame", "yarn production"),
                ("paper machine", "sheet forming"),
                ("knitting machine", "fabric production"),
            ],
            components: [
                ("heddle", "guide element"),
                ("shuttle", "carrier"),
                ("spindle", "rotary element"),
                ("headbox", "distribution chamber"),
                ("felt", "transfer belt"),
                ("needle bed", "support structure"),
                ("drying cylinder", "thermal device"),
                ("tension roller", "rotary element"),
            ],
            materials: ["cotton", "polyester", "wool", "cellulose pulp"],
        },
        E => World {
            systems: [
                ("bridge", "load transfer"),
                ("retaining wall", "soil retention"),
                ("roof truss", "roof support"),
                ("window unit", "daylighting"),
            ],
            components: [
                ("girder", "beam"),
                ("anchor bolt", "fastener"),
                ("footing", "foundation element"),
                ("rafter", "beam"),
                ("glazing panel", "panel"),
                ("drainage layer", "water barrier"),
                ("bearing pad", "support element"),
                ("sash", "frame element"),
            ],
            materials: ["concrete", "timber", "structural steel", "glass"],
        },
        F => World {
            systems: [
                ("gas turbine", "power generation"),
                ("gearbox", "torque transmission"),
                ("heat pump", "space heating"),
                ("combustion engine", "vehicle propulsion"),
            ],
            components: [
                ("compressor", "rotary machine"),
                ("rotor blade", "airfoil"),
                ("planetary gear", "gear"),
                ("crankshaft", "shaft"),
                ("expansion valve", "valve"),
                ("piston", "reciprocating element"),
                ("bearing", "support element"),
                ("turbocharger", "rotary machine"),
            ],
            materials: ["inconel", "bronze", "forged steel", "aluminium alloy"],
        },
        G => World {
            systems: [
                ("lidar scanner", "distance measurement"),
                ("spectrometer", "chemical analysis"),
                ("gyroscope", "orientation sensing"),
                ("microscope", "sample imaging"),
            ],
            components: [
                ("photodiode", "optical sensor"),
                ("laser diode", "light source"),
                ("diffraction grating", "optical element"),
                ("objective lens", "optical element"),
                ("mems resonator", "resonator"),
                ("beam splitter", "optical element"),
                ("signal processor", "processing unit"),
                ("sample stage", "positioning device"),
            ],
            materials: ["fused silica", "germanium", "quartz", "sapphire"],
        },
        H => World {
            systems: [
                ("inverter", "power conversion"),
                ("battery pack", "energy storage"),
                ("antenna array", "wireless communication"),
                ("solar module", "power generation"),
            ],
            components: [
                ("transistor", "switching element"),
                ("capacitor", "storage element"),
                ("battery cell", "storage element"),
                ("busbar", "conductor"),
                ("phase shifter", "signal element"),
                ("photovoltaic cell", "energy converter"),
                ("heat sink", "thermal device"),
                ("gate driver", "control circuit"),
            ],
            materials: ["silicon carbide", "lithium iron phosphate", "copper", "gallium nitride"],
        },
    }
}

fn a(noun: &str) -> String {
    let an = noun.starts_with(|c: char| "aeiou".contains(c));
    format!("{} {noun}", if an { "an" } else { "a" })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Characteristic property of a component, fixed per (seed, section).
fn property_of(seed: u64, section: IpcSection, component_idx: usize) -> &'static str {
    let mut rng = rng_from_seed(derive_seed(seed, &format!("synth/world/{section}")));
    let mut props: Vec<&str> = PROPERTIES.to_vec();
    props.shuffle(&mut rng);
    props[component_idx % props.len()]
}

fn make_doc(seed: u64, section: IpcSection, index: usize, rng: &mut Rng) -> PatentDoc {
    let w = world(section);
    let sys = rng.gen_range(0..w.systems.len());
    let (system, purpose) = w.systems[sys];
    // each system is built from four of the eight components
    let mut idx: Vec<usize> = (0..4).map(|k| (2 * sys + k) % w.components.len()).collect();
    idx.shuffle(rng);
    let (c1, c2, c3) = (idx[0], idx[1], idx[2]);
    let name = |i: usize| w.components[i].0;
    let material = w.materials[rng.gen_range(0..w.materials.len())];
    let other_material = loop {
        let m = w.materials[rng.gen_range(0..w.materials.len())];
        if m != material {
            break m;
        }
    };

    let mut s = vec![format!("{} is disclosed.", capitalize(&a(system)))];
    for c in [c1, c2, c3] {
        s.push(format!("The {} is a part of the {system}.", name(c)));
    }
    if rng.gen_bool(0.5) {
        s.push(format!("The {system} is used for {purpose}."));
    }
    if rng.gen_bool(0.5) {
        s.push(format!("The {} is a type of {}.", name(c1), w.components[c1].1));
    }
    if rng.gen_bool(0.5) {
        s.push(format!("{} is a feature of the {}.", capitalize(property_of(seed, section, c2)), name(c2)));
    }
    if rng.gen_bool(0.6) {
        s.push(format!("The {} is used in conjunction with the {}.", name(c1), name(c3)));
    }
    s.push(format!("The {} is made of {material}.", name(c1)));
    if rng.gen_bool(0.4) {
        s.push(format!("{} is compared with {other_material} for the {}.", capitalize(material), name(c1)));
    }
    s.push(CLOSINGS[rng.gen_range(0..CLOSINGS.len())].to_string());

    let title = format!("{} with {} and {} for {purpose}", capitalize(system), name(c1), name(c2));
    let mut claims = vec![
        format!("{}, comprising: {}; {}; and {}.", capitalize(&a(system)), a(name(c1)), a(name(c2)), a(name(c3))),
        format!("The {system} of claim 1, wherein the {} is made of {material}.", name(c1)),
    ];
    if rng.gen_bool(0.5) {
        claims.push(format!("The {system} of claim 1, wherein the {} is a type of {}.", name(c2), w.components[c2].1));
    }
    claims.push(format!("A method for {purpose}, comprising operating the {system} of claim 1."));

    PatentDoc {
        id: format!("{}{:03}", section.letter(), index + 1),
        ipc_section: section,
        title,
        abstract_text: s.join(" "),
        claims,
    }
}

/// `per_section` documents for each of the eight sections, section by
/// section. Pure function of the arguments.
pub fn generate_corpus(seed: u64, per_section: usize) -> Vec<PatentDoc> {
    let mut out = Vec::with_capacity(per_section * 8);
    for section in IpcSection::ALL {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("synth/docs/{section}")));
        for i in 0..per_section {
            out.push(make_doc(seed, section, i, &mut rng));
        }
    }
    out
}

/// Aggregated graph of the triples extracted from `docs`.
pub fn corpus_graph(docs: &[PatentDoc], patterns: &PatternSet) -> KnowledgeGraph {
    let per_doc: Vec<_> = docs.iter().map(|d| extract_triples(d, patterns)).collect();
    aggregate(&per_doc)
}

/// Verbalized facts of `held_out` documents that are absent from
/// `known`, in canonical order.
pub fn knowledge_probes(known: &KnowledgeGraph, held_out: &[PatentDoc], patterns: &PatternSet) -> Vec<String> {
    corpus_graph(held_out, patterns).triples().filter(|t| known.get(&t.key()).is_none()).map(verbalize).collect()
}

/// Four-choice questions about `PartOf` facts in `kg`: which listed
/// entity is a part of the given whole. Distractors are entities never
/// linked to that whole in the graph. The correct position is uniform.
pub fn mcq_items(kg: &KnowledgeGraph, n: usize, seed: u64) -> Vec<McqItem> {
    let mut rng = rng_from_seed(derive_seed(seed, "synth/mcq"));
    let facts: Vec<(String, String)> = kg
        .triples()
        .filter(|t| t.relation == RelationType::PartOf)
        .map(|t| (t.head.name.clone(), t.tail.name.clone()))
        .collect();
    let parts: Vec<String> = {
        let mut v: Vec<String> = facts.iter().map(|(h, _)| h.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut items = Vec::new();
    if facts.is_empty() || parts.len() < 4 {
        return items;
    }
    let mut attempts = 0;
    while items.len() < n && attempts < n * 20 {
        attempts += 1;
        let (part, whole) = &facts[rng.gen_range(0..facts.len())];
        let mut distractors: Vec<&String> =
            parts.iter().filter(|p| *p != part && !kg.contains(p, RelationType::PartOf, whole)).collect();
        if distractors.len() < 3 {
            continue;
        }
        distractors.shuffle(&mut rng);
        let correct_index = rng.gen_range(0..4);
        let mut choices: Vec<String> = distractors[..3].iter().map(|s| s.to_string()).collect();
        choices.insert(correct_index, part.clone());
        items.push(McqItem { question: format!("Which component is a part of the {whole}?"), choices, correct_index });
    }
    items
}
