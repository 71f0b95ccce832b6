"""Deployment telemetry: engagement curves, peak attribution, cost per query.

Builds a synthetic 7-week query log shaped like a real course deployment
(assessment-driven spikes, anonymous session hashes) and runs the batch
aggregations over it.
"""

from datetime import date, datetime, time, timedelta, timezone

from tutorkit import PriceTable, QueryLogRecord
from tutorkit.telemetry import cost_report, daily_counts, peak_share, usage_summary

START = date(2025, 2, 17)
EXAM_DAY = date(2025, 3, 19)
WEEKS = 7

# --- synthesize a log: quiet weekdays, a huge exam-day spike -----------------

records = []
session = 0
for day_index in range(WEEKS * 7):
    day = START + timedelta(days=day_index)
    if day == EXAM_DAY:
        queries = 724
    elif day.weekday() >= 5:
        queries = 4
    else:
        queries = 22 + (day_index % 9)
    for j in range(queries):
        records.append(
            QueryLogRecord(
                timestamp=datetime.combine(day, time(9, 0), tzinfo=timezone.utc)
                + timedelta(seconds=17 * j),
                session_token_hash=f"anon-{session % 300:03d}",
                prompt_tokens=1800 + (j % 7) * 50,
                completion_tokens=220 + (j % 5) * 30,
            )
        )
        session += 1

print(f"synthesized {len(records)} queries over {WEEKS} weeks\n")

# --- engagement summary -------------------------------------------------------

summary = usage_summary(records, cohort_size=43)
print(
    f"sessions: {summary.total_sessions}   "
    f"queries/session: {summary.queries_per_session:.1f}   "
    f"queries/student: {summary.queries_per_student:.1f}   "
    f"span: {summary.span_days} days"
)

# --- daily counts as a terminal sparkline -------------------------------------

counts = daily_counts(records)
peak_count = max(n for _, n in counts)
print("\nqueries per day (each bar = one day):")
for day, n in counts[:21]:
    bar = "#" * max(1, round(40 * n / peak_count)) if n else ""
    print(f"  {day}  {n:4d} {bar}")
print("  ...")

# --- peak attribution ----------------------------------------------------------

peak = peak_share(records, EXAM_DAY)
print(
    f"\nexam day {EXAM_DAY}: {peak['day_queries']} of {peak['total_queries']} queries "
    f"= {100 * peak['share']:.1f}% of the whole deployment"
)

# --- cost accounting ------------------------------------------------------------

prices = PriceTable(price_in_per_1k=0.00015, price_out_per_1k=0.0006)
report = cost_report(records, fixed_cost=834.77, price_table=prices)
print(
    f"\nfixed infrastructure: 834.77   token usage: {report['token_cost']:.2f}\n"
    f"per query: {report['per_query_cost']:.3f}   "
    f"token-only per query: {report['token_per_query_cost']:.4f}"
)
print("fixed-tier infrastructure dominates; right-size it before tuning prompts.")
