"""Prompt templates for description summarization and triple judging."""

import re

ENTITY_SUMMARY_PROMPT = (
    "You are a helpful assistant. Please summarize the following list of descriptions for the entity "
    "{entity_name} into a single, coherent paragraph. Combine the key information and remove redundant "
    "details.\n"
    "\n"
    "Descriptions to summarize:\n"
    "{description_list}\n"
    "\n"
    "Concise Summary:"
)

RELATION_SUMMARY_PROMPT = (
    "You are a helpful assistant. Please summarize the following list of descriptions for the relationship "
    "{item_name} into a single, coherent paragraph. Combine the key information and remove redundant "
    "details.\n"
    "\n"
    "Descriptions to summarize:\n"
    "{description_list}\n"
    "\n"
    "Concise Summary:"
)

JUDGE_SYSTEM_PROMPT = (
    "You are a knowledge graph expert who evaluates whether the knowledge graph triplet belongs to "
    "commonsense knowledge."
)

# <source>, <destination>, <relationship> are substituted literally.
JUDGE_USER_PROMPT = """Evaluate the reasonableness of the knowledge graph triplet with precision:

Source: <source>
Destination: <destination>
Relationship: <relationship>

Analysis requirements
- Semantic accuracy: Does the relationship accurately describe the connection? Consider domain knowledge and factual correctness.
- Relevance: Is the connection meaningful and significant, not trivial or coincidental?
- Specificity: Is the relationship clear and specific rather than vague or overly general?
- Logical coherence: Does the triple follow expected semantic and syntactic patterns for KGs?
- Entity type compatibility: Is the relationship sensible given the entity types involved?

Scoring guidelines
- 0.0-0.3: Invalid or highly questionable (factually wrong, illogical, meaningless)
- 0.4-0.6: Partially valid but problematic (some relevance yet vague/imprecise/minor inaccuracies)
- 0.7-0.8: Mostly valid (accurate but could be more specific or informative)
- 0.9-1.0: Fully valid (accurate, specific, informative, and logically sound)

Optimization notes
- Focus on direct evaluation without unnecessary elaboration.
- Use domain-specific reasoning where applicable.

Output format (return a valid JSON object):
{
    "analysis": "concise analysis",
    "score": 0.5
}
The score should be a float between 0.0-1.0 with two-decimal precision."""


def entity_summary_prompt(entity_name: str, descriptions: list[str]) -> str:
    return ENTITY_SUMMARY_PROMPT.format(entity_name=entity_name, description_list="\n".join(descriptions))


def relation_summary_prompt(item_name: str, descriptions: list[str]) -> str:
    return RELATION_SUMMARY_PROMPT.format(item_name=item_name, description_list="\n".join(descriptions))


def judge_user_prompt(source: str, destination: str, relationship: str) -> str:
    values = {"source": source, "destination": destination, "relationship": relationship}
    return re.sub(r"<(source|destination|relationship)>", lambda m: values[m.group(1)], JUDGE_USER_PROMPT)
