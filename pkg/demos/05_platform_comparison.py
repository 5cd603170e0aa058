"""Print the platform-comparison table from the shipped survey fixture.

Each platform gets a function score S (1 per fully supported function, 0.5
per partial, over the eight functions) and a preparation workload W (the sum
of relative setup-task times, with one store-app install as the unit).
"""

from parmosense.metrics import comparison_table, load_fixture

rows = comparison_table(load_fixture("platforms"))

print(f"{'platform':<14} {'w1':>3} {'w2':>3} {'w3':>3} {'w4':>3} {'w5':>3}"
      f" {'W':>4} {'S':>5}")
for r in rows:
    note = " *" if r["open_ended_w1"] else ""
    print(f"{r['name']:<14} {r['w1']:>3} {r['w2']:>3} {r['w3']:>3} {r['w4']:>3}"
          f" {r['w5']:>3} {r['W']:>4} {r['S']:>5}{note}")
print("\n* development time grows with every function added")

best = max(rows, key=lambda r: r["S"] / max(1, r["W"]))
print(f"best function-score-per-workload: {best['name']}"
      f" (S={best['S']}, W={best['W']})")
