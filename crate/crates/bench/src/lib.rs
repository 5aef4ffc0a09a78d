//! Synthetic inputs for the pipeline benchmarks.

use cskg_core::kg::{KnowledgeGraph, Relation, Triple};

const NOUNS: &[&str] = &[
    "snow", "grass", "sky", "coal", "lemon", "fire", "elephant", "ball", "cheetah", "giraffe", "river", "stone",
];
const LABELS: &[&str] = &["color", "temperature", "size", "shape", "taste", "speed", "height"];

/// A passage of `sentences` sentences drawn round-robin from a small vocabulary.
pub fn passage(sentences: usize) -> String {
    (0..sentences)
        .map(|i| {
            let a = NOUNS[i % NOUNS.len()];
            let b = NOUNS[(i * 7 + 3) % NOUNS.len()];
            format!("The {a} near the old bridge was covered with {b} in year {}.", 1900 + i)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A frozen graph with `subjects` synthetic subjects, one triple per label each.
pub fn graph(subjects: usize) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for s in 0..subjects {
        let subject = format!("{}{s}", NOUNS[s % NOUNS.len()]);
        for label in LABELS {
            kg.insert(Triple::new(
                &subject,
                Relation::attribute(label),
                &format!("{label}-value-{s}"),
            ))
            .expect("synthetic triple is valid");
        }
    }
    for noun in NOUNS {
        kg.insert(Triple::new(noun, Relation::attribute("color"), "white"))
            .expect("valid");
    }
    kg.freeze();
    kg
}

#[cfg(test)]
mod tests {
    #[test]
    fn inputs_are_deterministic() {
        assert_eq!(super::passage(3), super::passage(3));
        assert_eq!(super::graph(5).len(), 5 * 7 + 12);
    }
}
