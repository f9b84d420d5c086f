"""
Bracket citation extraction
===========================

Walk through how in-text citation groups like [1], [2,5], and [4-8] are
found, expanded, and classified. These groups are the "slots" the whole
audit revolves around: the model is asked to fill each one with a real
reference, and only single-number groups pin a slot to one bibliography
entry unambiguously.
"""

from citebias import extract_citations, select_intro_references, uniquely_identifiable_numbers

# A paragraph the way it looks after LaTeX cleaning: prose with numeric
# bracket groups. [4-8] is a compressed multi-citation; [see 3] is prose.
text = (
    "Transformers [1] reshaped the field, building on attention [2,5] "
    "and a long line of sequence models [4-8]. Some surveys disagree "
    "[see 3], and year markers like [2021] are not citations either."
)

groups = extract_citations(text, max_number=12)
print("groups found:")
for group in groups:
    print(f"  {group.raw:>8}  ->  {sorted(group.numbers)}")

# Only singleton groups identify their reference unambiguously; [4-8]
# cites five works with no one-to-one correspondence.
unique = uniquely_identifiable_numbers(groups)
print(f"\nuniquely identifiable slots: {sorted(unique)}")

# Intersect the cited numbers with a 10-entry reference list; citations
# beyond the list become warnings, never crashes.
reference_list = [(i, f"Author {i}. Work number {i}. Venue, 200{i % 10}.") for i in range(1, 11)]
warnings: list[str] = []
intro_refs = select_intro_references(groups, reference_list, warnings)
print(f"\nintro references selected: {[num for num, _ in intro_refs]}")
print(f"warnings: {warnings or 'none'}")
