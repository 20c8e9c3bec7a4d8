"""Prompt templates for graph construction, infilling, verification, selection.

The templates are fixed strings; downstream behavior (answer parsing, caching
keys, scripted-backend matching) depends on their exact bytes, so edit with
care.
"""

from __future__ import annotations

INFILL_TEMPLATE = (
    "{context}\n"
    "Based on the above information, fill in the blank with the correct entity: "
    "{infilling_query}\n"
    "Answer:"
)

VERIFY_TEMPLATE = (
    "Evidence: {evidence}\n"
    "Claim: {claim}\n"
    "Is the claim true or false?\n"
    "Answer:"
)

SELECT_TEMPLATE = (
    "Evidence: {evidence}\n"
    "Claim: {claim}\n"
    "Does the evidence contain sufficient information to support or refute the claim? "
    "Yes or no?\n"
    "Answer:"
)

GRAPH_INSTRUCTIONS = """\
We are conducting fact-checking on multi-hop claims. To facilitate this process, we need to decompose each claim into triples for more granular and accurate fact-checking. Please follow the guidelines below when decomposing claims into triples:

# Latent Entities:
- (Identification) Firstly, identify any latent entities (i.e., implicit references not directly mentioned in the claim) that need to be clarified for accurate fact-checking.
- (Definition) Define these identified latent entities in triple format, using placeholders like (ENT1), (ENT2), etc.

# Triples:
- (Basic Information Unit) Decompose the claim into triples, ensuring you reach the most fundamental verifiable information while preserving the original meaning. Be careful not to lose important information during decomposition.
- (Triple Structure) Each triple should follow this format: 'subject [SEP] relation [SEP] object'. Both the subject and object should be noun phrases, while the relation should be a verb or verb phrase, forming a complete sentence.
- (Prepositional Phrases) In exceptional cases where a prepositional phrase modifies the entire triple (rather than just the subject or object) and splitting it into another triple would alter the meaning of the claim, do not divide it. Instead, append it to the end of the triple: 'subject [SEP] relation [SEP] object [PREP] preposition phrase'.
- (Pronoun Resolution) Replace any pronouns with the corresponding entities to ensure that each triple is self-contained and independent of external context.
- (Entity Consistency) Use the exact same string to represent entities (i.e., the 'subject' or 'object') whenever they refer to the same entity across different triples.
"""

# (claim, graph) demonstration pairs for the graph-construction prompt.  The
# "orginated" typo in the first claim is intentional (kept verbatim).
FEW_SHOT_EXAMPLES = (
    (
        "The fairy Queen Mab orginated with William Shakespeare.",
        "# Latent Entities:\n"
        "# Triples:\n"
        "The fairy Queen Mab [SEP] originated with [SEP] William Shakespeare",
    ),
    (
        "Giacomo Benvenuti and Claudio Monteverdi share the profession of Italian composer.",
        "# Latent Entities:\n"
        "# Triples:\n"
        "Giacomo Benvenuti [SEP] is [SEP] Italian composer\n"
        "Claudio Monteverdi [SEP] is [SEP] Italian composer",
    ),
    (
        'Ross Pople worked with the English composer Michael Tippett, who is known for '
        'his opera "The Midsummer Marriage".',
        "# Latent Entities:\n"
        "# Triples:\n"
        "Ross Pople [SEP] worked with [SEP] the English composer Michael Tippett\n"
        'The English composer Michael Tippett [SEP] is known for [SEP] the opera "The Midsummer Marriage"',
    ),
    (
        "Mark Geragos was involved in the scandal that took place in the 1990s.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] a scandal\n"
        "# Triples:\n"
        "Mark Geragos [SEP] was involved in [SEP] (ENT1)\n"
        "(ENT1) [SEP] took place in [SEP] the 1990s",
    ),
    (
        "Where is the airline company that operated United Express Flight 3411 on "
        "April 9, 2017 on behalf of United Express is headquartered in Indianapolis, "
        "Indiana.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] an airline company\n"
        "# Triples:\n"
        "(ENT1) [SEP] operated [SEP] United Express Flight 3411 [PREP] on April 9, 2017 on behalf of United Express\n"
        "(ENT1) [SEP] is headquartered in [SEP] Indianapolis, Indiana",
    ),
    (
        "The Skatoony has reruns on Teletoon in Canada and was shown between midnight "
        "and 6:00 on the network that launched 24 April 2006, the same day as rival "
        "Nick Jr. Too.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] a network\n"
        "# Triples:\n"
        "Skatoony [SEP] has reruns on [SEP] Teletoon\n"
        "Teletoon [SEP] is located in [SEP] Canada\n"
        "Skatoony [SEP] was shown on [SEP] (ENT1) [PREP] between midnight and 6:00\n"
        "(ENT1) [SEP] launched on [SEP] 24 April 2006\n"
        "Nick Jr. Too [SEP] launched on [SEP] 24 April 2006",
    ),
    (
        "Danny Shirley is older than Kevin Parker.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] a date\n"
        "(ENT2) [SEP] is [SEP] a date\n"
        "# Triples:\n"
        "Danny Shirley [SEP] was born on [SEP] (ENT1)\n"
        "Kevin Parker [SEP] was born on [SEP] (ENT2)\n"
        "(ENT1) [SEP] is before [SEP] (ENT2)",
    ),
    (
        "The founder of this Canadian owned, American manufacturer of business jets "
        "for civilian and military did not develop the 8-track portable tape system.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] an individual\n"
        "(ENT2) [SEP] is [SEP] an American manufacturer\n"
        "# Triples:\n"
        "(ENT1) [SEP] founded [SEP] (ENT2)\n"
        "(ENT2) [SEP] is owned by [SEP] Canadian\n"
        "(ENT2) [SEP] made [SEP] business jets for civilian and military\n"
        "(ENT1) [SEP] did not develop [SEP] 8-track portable tape system",
    ),
    (
        "The Dutch man who along with Dennis Bergkamp was acquired in the 1993-94 "
        "Inter Milan season, manages Cruyff Football together with the footballer "
        "who is also currently manager of Tel Aviv team.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] a Dutch man\n"
        "(ENT2) [SEP] is [SEP] a footballer\n"
        "# Triples:\n"
        "(ENT1) [SEP] was acquired in [SEP] the 1993-94 Inter Milan season [PREP] along with Dennis Bergkamp\n"
        "(ENT1) [SEP] manages [SEP] Cruyff Football [PREP] together with (ENT2)\n"
        "(ENT2) [SEP] currently manages [SEP] Tel Aviv team",
    ),
    (
        "An actor starred in the 2007 film based on a former FBI agent. That agent "
        "was Robert Philip Hanssen. The actor starred in the 2005 Capitol film Chaos.",
        "# Latent Entities:\n"
        "(ENT1) [SEP] is [SEP] an actor\n"
        "(ENT2) [SEP] is [SEP] a 2007 film\n"
        "# Triples:\n"
        "(ENT1) [SEP] starred in [SEP] (ENT2)\n"
        "(ENT2) [SEP] is based on [SEP] Robert Philip Hanssen\n"
        "Robert Philip Hanssen [SEP] is [SEP] a former FBI agent\n"
        "(ENT1) [SEP] starred in [SEP] the 2005 Capitol film Chaos",
    ),
)


def build_graph_prompt(claim: str) -> str:
    """Assemble the graph-construction prompt for one claim."""
    blocks = [GRAPH_INSTRUCTIONS]
    for example_claim, example_graph in FEW_SHOT_EXAMPLES:
        blocks.append(f"# Claim:\n{example_claim}\n{example_graph}\n")
    blocks.append(f"# Claim:\n{claim}\n")
    return "\n".join(blocks)


def build_infill_prompt(context: str, infilling_query: str) -> str:
    return INFILL_TEMPLATE.format(context=context, infilling_query=infilling_query)


def build_verify_prompt(evidence: str, claim: str) -> str:
    return VERIFY_TEMPLATE.format(evidence=evidence, claim=claim)


def build_select_prompt(evidence: str, claim: str) -> str:
    return SELECT_TEMPLATE.format(evidence=evidence, claim=claim)
