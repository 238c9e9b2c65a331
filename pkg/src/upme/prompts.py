"""Prompt templates and verdict parsing.

Four templates drive the protocol: question generation, answer generation,
and the two judge rubrics (correctness, visual understanding). Templates are
plain text with {question}, {Answer_a}, {Answer_b} placeholders and can be
overridden from UTF-8 files per run.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import JudgeParseError, TemplateError
from .model import Verdict

QUESTION_GEN = "QuestionGen"
ANSWER_GEN = "AnswerGen"
JUDGE_CORRECT = "JudgeCorrect"
JUDGE_VISUAL = "JudgeVisual"

TEMPLATE_IDS = (QUESTION_GEN, ANSWER_GEN, JUDGE_CORRECT, JUDGE_VISUAL)

REQUIRED_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    QUESTION_GEN: (),
    ANSWER_GEN: ("{question}",),
    JUDGE_CORRECT: ("{question}", "{Answer_a}", "{Answer_b}"),
    JUDGE_VISUAL: ("{question}", "{Answer_a}", "{Answer_b}"),
}

_QUESTION_GEN_BODY = """\
You are a review model tasked with evaluating the visual capabilities of two other models.

Based on the provided image input, generate a question that is directly related to the content of the image.

Please respond with only the question and no additional content.
"""

_ANSWER_GEN_BODY = """\
[System]

Please act as an image-understanding expert to solve the problem based on the provided image.

First, analyze the provided image in detail, focusing on its overall theme and key elements.

Then, outline your reasoning process step by step, considering how each detail contributes to your understanding of the image.

Finally, provide a clear and accurate answer to the user's question based on your analysis. Let's think step by step.

[User Question]
{question}

Once you've completed your reasoning, pick one choice from the options. Output the final answer in the format: "[[X]]" where X is the selected option.
"""

_JUDGE_CORRECT_BODY = """\
[System]

You are a review model tasked with evaluating responses from two assistants to a question about an image. Each assistant has provided an answer based on their interpretation of the image.

Your evaluation is strictly objective, focusing only on which response is correct. Please proceed as follows:

1. Assess if Assistant A's response is correct.
2. Assess if Assistant B's response is correct.
3. Compare the correctness of both responses:
   - If only one assistant provides a correct answer, output "[[A]]" if Assistant A is correct, or "[[B]]" if Assistant B is correct.
   - If both answers are correct or both are incorrect, output "[[C]]" to indicate a tie.

Avoid considering subjective factors such as response quality, detail, or reasoning process. Base your decision solely on the correctness of the answers.

[User Question]
{question}

[The Start of Assistant A's Response]
{Answer_a}
[The End of Assistant A's Response]

[The Start of Assistant B's Response]
{Answer_b}
[The End of Assistant B's Response]

[Task]

Based solely on the correctness of the two responses, determine which assistant answered the question accurately. Use the specified format for your final verdict.
"""

# The duplicated "Assistant A" end marker after B's response is part of the
# shipped default; judges tolerate it and overriding the file fixes it.
_JUDGE_VISUAL_BODY = """\
[System]

You are a review model tasked with evaluating responses from two assistants to a question about an image.

Each assistant has provided an answer based on their analysis of the image.

Evaluation Criteria:
- Captioning: Evaluate the ability to generate precise descriptions of image elements.
- Reasoning: Assess logical consistency and coherence in explanations and conclusions.
- Grounding: Evaluate accurate object localization within the image.
- Relationship: Assess the understanding of relationships and interactions between subjects in the image.
- Focus exclusively on the depth of visual understanding and the quality of reasoning (as described above) in each response. Do not evaluate based on correctness.

Evaluation Format:
- Compare the two responses impartially. Ignore the order of presentation and the length of the responses. Do not favor any specific assistant based on their name.

- Conclude your evaluation by using the following format:
  - [[A]] if assistant A's response demonstrates better visual understanding and reasoning,
  - [[B]] if assistant B's response demonstrates better visual understanding and reasoning,
  - [[C]] if it is a tie.

[User Question]
{question}

[The Start of Assistant A's Response]
{Answer_a}
[The End of Assistant A's Response]

[The Start of Assistant B's Response]
{Answer_b}
[The End of Assistant A's Response]

[Task]
Based on the image, question, and two responses provided, and following the criteria above, determine which assistant provided a better answer focusing solely on visual understanding and reasoning. Use the specified format for your final verdict.
"""

_DEFAULT_BODIES = {
    QUESTION_GEN: _QUESTION_GEN_BODY,
    ANSWER_GEN: _ANSWER_GEN_BODY,
    JUDGE_CORRECT: _JUDGE_CORRECT_BODY,
    JUDGE_VISUAL: _JUDGE_VISUAL_BODY,
}


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    def __post_init__(self):
        if self.template_id not in TEMPLATE_IDS:
            raise TemplateError(f"unknown template id {self.template_id!r}")
        for placeholder in REQUIRED_PLACEHOLDERS[self.template_id]:
            n = self.body.count(placeholder)
            if n != 1:
                raise TemplateError(
                    f"{self.template_id} must contain {placeholder} exactly once, found {n}"
                )


def default_template(template_id: str) -> PromptTemplate:
    if template_id not in _DEFAULT_BODIES:
        raise TemplateError(f"unknown template id {template_id!r}")
    return PromptTemplate(template_id, _DEFAULT_BODIES[template_id])


def load_template(template_id: str, path: str | Path) -> PromptTemplate:
    """Read a template override from a UTF-8 text file (validated on load)."""
    return PromptTemplate(template_id, Path(path).read_text(encoding="utf-8"))


def render_prompt(template: PromptTemplate, **bindings: str) -> str:
    """Substitute every placeholder exactly; missing bindings are an error."""
    text = template.body
    for placeholder in REQUIRED_PLACEHOLDERS[template.template_id]:
        key = placeholder[1:-1]
        if key not in bindings:
            raise TemplateError(f"missing binding {key!r} for {template.template_id}")
        text = text.replace(placeholder, bindings[key])
    for placeholder in REQUIRED_PLACEHOLDERS[template.template_id]:
        if placeholder in text:
            raise TemplateError(
                f"placeholder {placeholder} still present after rendering {template.template_id}"
            )
    return text


VERDICT_MARKERS = (("[[A]]", Verdict.WIN_A), ("[[B]]", Verdict.WIN_B), ("[[C]]", Verdict.TIE))


def parse_verdict(raw: str) -> Verdict:
    """Last [[A]]/[[B]]/[[C]] marker wins; judges restate options before concluding."""
    best_pos = -1
    best: Verdict | None = None
    for marker, verdict in VERDICT_MARKERS:
        pos = raw.rfind(marker)
        if pos > best_pos:
            best_pos = pos
            best = verdict
    if best is None:
        raise JudgeParseError(f"no verdict marker in judge output: {raw[:120]!r}")
    return best
