"""Writes synthetic_mohler.tsv: a stand-in with the published shape of the
Mohler corpus (80 questions, 2273 answers, mean grade 4.17, median 4.5).

The text is synthetic; only the counts and the grade distribution matter.
Run from this directory: python3 make_synthetic_mohler.py
"""

import random

N_QUESTIONS = 80
N_ANSWERS = 2273
ASSIGNMENTS = 10
GRADES = [x / 2 for x in range(11)]
# Left-skewed toward full marks like the original corpus.
WEIGHTS = [4, 2, 6, 8, 18, 22, 45, 70, 150, 230, 300]

WORDS = (
    "array list node pointer stack queue tree heap hash table key value loop index "
    "function call return base case recursion memory address variable type class "
    "object constructor method field sort search binary linear time space order "
    "insert delete push pop front back root leaf child parent edge path graph"
).split()


def grade_sequence(rng):
    while True:
        grades = rng.choices(GRADES, WEIGHTS, k=N_ANSWERS)
        mean = sum(grades) / N_ANSWERS
        median = sorted(grades)[N_ANSWERS // 2]
        if abs(mean - 4.17) < 0.001 and median == 4.5:
            return grades


def main():
    rng = random.Random(2019)
    grades = grade_sequence(rng)
    per_question = [N_ANSWERS // N_QUESTIONS] * N_QUESTIONS
    for i in range(N_ANSWERS % N_QUESTIONS):
        per_question[i] += 1
    lines = ["id\tquestion\tdesired_answer\tstudent_answer\tgrade_1\tgrade_2\tgrade_avg"]
    k = 0
    for q in range(N_QUESTIONS):
        qid = f"{q // 8 + 1}.{q % 8 + 1}"
        question = f"Question {qid}: explain the " + " ".join(rng.sample(WORDS, 3)) + "?"
        desired = rng.sample(WORDS, 8)
        for _ in range(per_question[q]):
            g = grades[k]
            k += 1
            keep = max(1, round(len(desired) * g / 5))
            answer = rng.sample(desired, keep) + rng.sample(WORDS, 8 - keep)
            g1, g2 = int(g), int(g + 0.5)
            if rng.random() < 0.5:
                g1, g2 = g2, g1
            avg = f"{g:g}"
            lines.append(f"{qid}\t{question}\tThe {' '.join(desired)}.\tThe {' '.join(answer)}.\t{g1}\t{g2}\t{avg}")
    assert k == N_ANSWERS and len({l.split(chr(9))[0] for l in lines[1:]}) == N_QUESTIONS
    assert ASSIGNMENTS == len({l.split(".")[0] for l in lines[1:]})
    with open("synthetic_mohler.tsv", "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
