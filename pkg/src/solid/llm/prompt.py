"""Prompt construction for the language-model agent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._validation import check_vector
from .confidence import ConfidenceLevel

NO_NEWS = "(no news available for this period)"

SYSTEM_PROMPT = """\
You are working together with a quantitative optimization model to build a portfolio. \
The model specializes in numerical computation and historical price analysis; it keeps risk low \
while hitting a target return. You contribute context: what the news means, strategic judgment, \
and the ability to react to events the price history does not show yet.

Keep the following in mind:

1. Historically the optimization model has beaten unaided discretionary allocations by a wide \
margin. When your view differs a lot from the model's, review its proposal closely and move toward it \
unless a concrete, evidence-based reason tells you otherwise.

2. Be willing to compromise. Update your view when the model's proposal is well supported; \
stubborn allocations tend to perform worse.

3. The shared goal is the best overall portfolio, so work with the model's proposal rather than \
against it and try to bring the two plans closer.

4. When you disagree, say which parts of the model's proposal you accept and which you would \
change. Refine incrementally instead of discarding the model's plan."""

SPARSITY_DIRECTIVE = (
    "Aim for sparsity in the final allocation: give Very Low Confidence or Low Confidence to every "
    "stock you do not clearly want to hold, since those stocks will receive zero weight."
)


@dataclass(frozen=True)
class PromptContext:
    """Everything the language-model agent sees in one iteration.

    ``decision_price`` is the agent's current dual price and ``public_plan``
    the coordinator's current public decision, both ordered like ``tickers``.
    """

    tickers: tuple
    news: dict = field(default_factory=dict)
    recent_prices: str = ""
    decision_price: np.ndarray | None = None
    public_plan: np.ndarray | None = None
    sparse_mode: bool = False
    period: str | None = None

    def __post_init__(self):
        tickers = tuple(self.tickers)
        if not tickers:
            raise ValueError("tickers must be nonempty")
        if len(set(tickers)) != len(tickers):
            raise ValueError("tickers must be unique")
        n = len(tickers)
        price = np.zeros(n) if self.decision_price is None else self.decision_price
        plan = np.full(n, 1.0 / n) if self.public_plan is None else self.public_plan
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "decision_price", check_vector(price, "decision_price", n))
        object.__setattr__(self, "public_plan", check_vector(plan, "public_plan", n))

    def with_state(self, decision_price, public_plan):
        return PromptContext(
            tickers=self.tickers,
            news=self.news,
            recent_prices=self.recent_prices,
            decision_price=decision_price,
            public_plan=public_plan,
            sparse_mode=self.sparse_mode,
            period=self.period,
        )


def _format_line(tickers):
    return ", ".join(f"{t}: X{i + 1}" for i, t in enumerate(tickers))


def build_prompt(ctx):
    """Return ``(system_text, user_text)`` for one iteration."""
    news_blocks = []
    for t in ctx.tickers:
        body = (ctx.news.get(t) or "").strip() or NO_NEWS
        news_blocks.append(f"news for {t}:\n{body}")
    prices = ctx.recent_prices.strip() or "(no recent prices provided)"
    decision_prices = ", ".join(f"{t}: {v:+.4f}" for t, v in zip(ctx.tickers, ctx.decision_price))
    plan = ", ".join(f"{t}: {v:.4f}" for t, v in zip(ctx.tickers, ctx.public_plan))
    levels = "\n".join(f"   - {lvl.label}" for lvl in ConfidenceLevel)
    sparse = f"\n{SPARSITY_DIRECTIVE}\n" if ctx.sparse_mode else ""

    user = f"""\
Read the information below carefully.

---
**Stock News**

{chr(10).join(news_blocks)}

---
**Recent Stock Prices**

{prices}

---
You are the trader in charge of allocating capital across these stocks: {", ".join(ctx.tickers)}. \
Use the news and price data to decide how much to invest in each one.

Work through the following steps:

1. For each stock, consider the news and how it is likely to move the price.
2. Review the current shared plan, i.e. the portfolio weights proposed by the optimizer and \
agreed so far: {plan}
   Here is the decision-price of your plan so far: {decision_prices}. \
A positive decision-price means you should move your allocation for that stock higher; a negative \
decision-price means you should move it lower.
   Explain where you agree or disagree with the optimizer. If unsure, move closer to the optimizer.
3. Give a confidence level for each stock, chosen from:
{levels}
4. Make your final decision based on the steps above and briefly explain how it fits with the \
optimizer's plan.
{sparse}
You must give a decision for every stock even if you are uncertain.

### Response Format
After your explanation, write your final recommendation on a single last line in exactly this format:

{_format_line(ctx.tickers)}

Replace X1, X2, ... with the confidence level for each stock. End your response with that line so it \
can be parsed automatically."""
    return SYSTEM_PROMPT, user


CORRECTIVE_INSTRUCTION = (
    "Your previous reply could not be parsed ({reason}). Reply again and end with a single line "
    "of the form {format_line}, using one of the seven confidence levels for every stock."
)


def corrective_message(ctx, reason):
    return CORRECTIVE_INSTRUCTION.format(reason=reason, format_line=_format_line(ctx.tickers))
