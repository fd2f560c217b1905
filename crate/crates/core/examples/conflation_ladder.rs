//! Parse a small CoNLL-U corpus, inspect its tag histogram and walk the
//! conflation ladder that merges the two rarest tags at each step.

use rhokit::annotations::{conflate_ladder, majority_class_accuracy, parse_corpus, tag_histogram, Format, TagColumn};

const CONLLU: &str = "\
# text = The cat sat.
1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_
2\tcat\tcat\tNOUN\tNN\t_\t3\tnsubj\t_\t_
3\tsat\tsit\tVERB\tVBD\t_\t0\troot\t_\t_
4\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_

# text = Dogs bark loudly.
1\tDogs\tdog\tNOUN\tNNS\t_\t2\tnsubj\t_\t_
2\tbark\tbark\tVERB\tVBP\t_\t0\troot\t_\t_
3\tloudly\tloudly\tADV\tRB\t_\t2\tadvmod\t_\t_
4\t.\t.\tPUNCT\t.\t_\t2\tpunct\t_\t_
";

fn main() -> rhokit::Result<()> {
    for column in [TagColumn::Upos, TagColumn::Xpos] {
        let corpus = parse_corpus(CONLLU.as_bytes(), Format::Conllu, column, "inline")?;
        let hist = tag_histogram(&corpus);
        println!("{column:?}: {} tags, majority accuracy {:.3}", corpus.distinct_tags(), majority_class_accuracy(&hist));
        for (tag, n) in &hist.counts {
            println!("  {tag}\t{n}");
        }
        for step in conflate_ladder(&corpus)?.steps {
            let (a, b) = &step.merged_pair;
            println!("  step {}: {a} + {b} -> {} ({} tags left)", step.annotation_id, step.new_tag, step.corpus.distinct_tags());
        }
    }
    Ok(())
}
