//! Shows the rule-based canonicalizer on raw answers, then how the
//! hierarchical oracle turns its verdicts into reannotation outcomes.

use aqua::corpus::QuestionType;
use aqua::oracle::{classify_annotation, Evidence, HierarchicalOracle, ReannotationRequest};
use aqua::policy::CaseLabel;
use aqua::pools::{GroundTruth, InstanceId};
use aqua::synth::{generate_synthetic, GenConfig};

fn main() -> aqua::Result<()> {
    let bundle = generate_synthetic(&GenConfig::default())?.bundle;
    let answers = [
        ("Rectangle", QuestionType::Shape),
        ("rectangular", QuestionType::Shape),
        ("reddish", QuestionType::Color),
        ("a red one", QuestionType::Color),
        ("2 chairs", QuestionType::Quantity),
        ("yeah", QuestionType::Other),
        ("red", QuestionType::Shape),
        ("purple", QuestionType::Color),
    ];
    for (answer, qtype) in answers {
        let verdict = bundle.canonicalize(answer, qtype);
        let shown = verdict.term().map(|t| bundle.corpus.surface(t)).unwrap_or("-");
        println!("{answer:>12} ({qtype}) -> {verdict:?} {shown}");
    }

    println!();
    let requests = [
        ("rectangle", "rectangle", QuestionType::Shape),
        ("rectangular", "rectangle", QuestionType::Shape),
        ("red", "circle", QuestionType::Shape),
    ];
    for (i, (surface, clean, qtype)) in requests.into_iter().enumerate() {
        let label = bundle.corpus.id_of(surface).expect("term in corpus");
        let clean = bundle.corpus.id_of(clean).expect("term in corpus");
        let req = ReannotationRequest {
            id: InstanceId(i as u64),
            qtype,
            label,
            surface: surface.into(),
            truth: Some(GroundTruth {
                clean_label: clean,
                noise_kind: classify_annotation(&bundle, label, clean),
            }),
            evidence: Evidence {
                top_predictions: vec![],
                logdet_cov: 0.0,
                loss: 0.0,
                case: CaseLabel::Incompatible,
            },
        };
        let out = HierarchicalOracle::decide(&bundle, &req);
        println!(
            "{surface:>12} [{:?}] -> {:?}, now {:?}",
            req.truth.unwrap().noise_kind,
            out.outcome,
            out.surface
        );
    }
    Ok(())
}
