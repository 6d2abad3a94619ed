use dig_core::fixtures::GRAMMARS;
use dig_core::{format_grammar, parse_grammar, validate_grammar};

#[test]
fn every_fixture_is_well_formed() {
    for (name, src) in GRAMMARS {
        let ast = parse_grammar(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let report = validate_grammar(&ast);
        assert!(report.is_empty(), "{name}: {:?}", report.findings);
    }
}

#[test]
fn every_fixture_roundtrips_through_the_printer() {
    for (name, src) in GRAMMARS {
        let ast = parse_grammar(src).unwrap();
        let printed = format_grammar(&ast);
        assert_eq!(parse_grammar(&printed).unwrap(), ast, "{name}:\n{printed}");
        assert_eq!(parse_grammar(src).unwrap(), ast, "{name}: parse is deterministic");
    }
}
