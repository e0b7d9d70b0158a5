HELP_GENERATE = """Write a seeded synthetic dataset (to --input, or generated.csv in the
output directory) together with truth_pois.csv and truth_meetings.jsonl."""

HELP_ANONYMIZE = """Validate --input, enforce constant speed on every trace, then find
natural mix-zones and shuffle labels at their exits. Writes validated.csv,
smoothed.csv, anonymized.csv, audit.jsonl and utility.json.
Use --no-smooth or --no-swap to bypass a stage."""

HELP_ATTACK = """Run the stay-point attacker on validated.csv and anonymized.csv and
the linkage attacker on every audited zone. Writes privacy.json."""

HELP_EVALUATE = """Combine utility and privacy measurements of a finished run into
evaluation.json."""

HELP_PLOTDATA = """Write plot/<stage>/<label>.csv vertex files for the original,
smoothed and swapped stages of a finished run."""
