use super::{AeTag, SentenceRecord};
use crate::error::{Error, Result};

/// Converts 10-column CoNLL-U text to untagged records: FORM → tokens, HEAD → heads,
/// DEPREL → deprels. Comment lines, multiword ranges (`3-4`) and empty nodes (`5.1`)
/// are skipped. Tags are set to `O`/no sentiment and can be filled in afterwards.
pub fn conllu_to_records(text: &str) -> Result<Vec<SentenceRecord>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut deprels = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, heads: &mut Vec<usize>, deprels: &mut Vec<String>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let n = tokens.len();
        let record = SentenceRecord {
            tokens: std::mem::take(tokens),
            ae_tags: vec![AeTag::O; n],
            as_tags: vec![None; n],
            heads: std::mem::take(heads),
            deprels: std::mem::take(deprels),
        };
        record.validate_structure()?;
        out.push(record);
        Ok(())
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            flush(&mut tokens, &mut heads, &mut deprels)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |msg: String| Error::Record {
            source_name: "conllu".into(),
            line: lineno + 1,
            message: msg,
        };
        if cols.len() != 10 {
            return Err(bad(format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let head = cols[6]
            .parse::<usize>()
            .map_err(|e| bad(format!("bad HEAD `{}`: {e}", cols[6])))?;
        tokens.push(cols[1].to_string());
        heads.push(head);
        deprels.push(cols[7].to_string());
    }
    flush(&mut tokens, &mut heads, &mut deprels)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_two_sentences() {
        let text = "# text = great phone\n\
1\tgreat\tgreat\tADJ\tJJ\t_\t2\tamod\t_\t_\n\
2\tphone\tphone\tNOUN\tNN\t_\t0\troot\t_\t_\n\
\n\
1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n\
2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n";
        let recs = conllu_to_records(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].tokens, ["great", "phone"]);
        assert_eq!(recs[0].heads, [2, 0]);
        assert_eq!(recs[1].deprels, ["root", "advmod"]);
    }

    #[test]
    fn wrong_column_count_is_an_error() {
        assert!(conllu_to_records("1\tx\t0\n").is_err());
    }
}
