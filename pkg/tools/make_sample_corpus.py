#!/usr/bin/env python3
"""Regenerate the bundled sample corpus (src/coxql/data/sample_*.jsonl).

The sample corpus is hand-written question templates expanded with seeded
ids and counts. Train and test use disjoint templates. It is a stand-in for
the released CoXQL files, which are not shipped here.

    python tools/make_sample_corpus.py
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "coxql" / "data"

NUMBER_WORDS = {2: "two", 3: "three", 4: "four", 5: "five", 6: "six", 7: "seven", 8: "eight", 10: "ten"}

METHOD_PHRASES = {
    "lime": ["using LIME", "with lime", "based on LIME"],
    "attention": ["based on attention", "using attention scores", "with attention"],
    "integrated_gradient": ["with integrated gradients", "using integrated gradient"],
    "input_x_gradient": ["using input x gradient", "with input gradient", "via input x gradient"],
}

# (question template, parse template). Placeholders: {id}, {n}, {nw}, {m} (method phrase).
TRAIN = {
    "predict": [
        ("What is the prediction for data point number {id}?", "filter id {id} and predict"),
        ("What does the model predict for id {id}?", "filter id {id} and predict"),
        ("Tell me the predicted label of instance {id}.", "filter id {id} and predict"),
        ("Which class is assigned to id {id}?", "filter id {id} and predict"),
        ("Could you predict data point {id} for me?", "filter id {id} and predict"),
        ("What would the classifier output for instance {id}?", "filter id {id} and predict"),
        ("Show me the predictions for the previous instances.", "previousfilter and predict"),
    ],
    "likelihood": [
        ("Give me the confidence score for this prediction on id {id}?", "filter id {id} and likelihood"),
        ("How confident is the model about instance {id}?", "filter id {id} and likelihood"),
        ("What is the probability of the predicted class for id {id}?", "filter id {id} and likelihood"),
        ("How sure are you about your answer on data point {id}?", "filter id {id} and likelihood"),
        ("Tell me the likelihood of the prediction for instance {id}.", "filter id {id} and likelihood"),
    ],
    "mistake": [
        ("Tell me the amount of data the model predicts falsely.", "mistake count"),
        ("Can you demonstrate how many data points are predicted wrongly?", "mistake count"),
        ("Show me some data you predict incorrectly.", "mistake sample"),
        ("How many errors does the model make?", "mistake count"),
        ("Count the misclassified instances.", "mistake count"),
        ("What is the number of wrong predictions?", "mistake count"),
        ("Give me a few examples the model gets wrong.", "mistake sample"),
        ("List some misclassified data points.", "mistake sample"),
        ("Which instances does the model fail on?", "mistake sample"),
        ("How many instances labeled negative are predicted incorrectly?", "labelfilter negative and mistake count"),
        ("Show me wrong predictions among texts longer than {n}0 tokens.", "lengthfilter token gt {n}0 and mistake sample"),
        ("How many mistakes are there on inputs shorter than {n}0 characters?", "lengthfilter character lt {n}0 and mistake count"),
    ],
    "score": [
        ("Give me the accuracy on the data.", "score accuracy"),
        ("What is the accuracy of the model?", "score accuracy"),
        ("How accurate is the classifier overall?", "score accuracy"),
        ("How well does the model perform?", "score accuracy"),
        ("Report the precision of the model.", "score precision"),
        ("What precision does the model reach on the dataset?", "score precision"),
        ("Tell me the recall score.", "score recall"),
        ("How high is the recall on this data?", "score recall"),
        ("What is the F1 score of the model?", "score f1"),
        ("Compute the f1 on the data.", "score f1"),
        ("Show me the ROC AUC of the classifier.", "score roc"),
        ("Give me the roc score.", "score roc"),
        ("What is the accuracy on instances labeled positive?", "labelfilter positive and score accuracy"),
        ("Tell me the precision on data predicted as negative.", "predfilter negative and score precision"),
        ("What is the recall for texts that contain the word refund?", "includes refund and score recall"),
    ],
    "nlpattribute": [
        ("Why do you predict instance {id}?", "filter id {id} and nlpattribute default"),
        ("Why did the model classify id {id} this way?", "filter id {id} and nlpattribute all default"),
        ("Show the feature importance for data point {id}.", "filter id {id} and nlpattribute all default"),
        ("Which words matter for the prediction on id {id}?", "filter id {id} and nlpattribute all default"),
        ("Explain the prediction of instance {id} {m}.", "filter id {id} and nlpattribute all {method}"),
        ("Why do you predict instance id {id} {m}?", "filter id {id} and nlpattribute all {method}"),
        ("Give me the attribution scores for id {id} {m}.", "filter id {id} and nlpattribute all {method}"),
        ("What are the top {n} important tokens for id {id}?", "filter id {id} and nlpattribute topk {n} default"),
        ("Top {n} features for data point {id}, please.", "filter id {id} and nlpattribute topk {n} default"),
        ("Show the {n} most important words for instance {id}.", "filter id {id} and nlpattribute topk {n} default"),
        ("List the top {nw} salient tokens of id {id}.", "filter id {id} and nlpattribute topk {n} default"),
        ("What are the top {n} features for id {id} {m}?", "filter id {id} and nlpattribute topk {n} {method}"),
        ("Show the {n} most relevant tokens for instance {id} {m}.", "filter id {id} and nlpattribute topk {n} {method}"),
        ("What is the most important word for id {id}?", "filter id {id} and nlpattribute topk 1 default"),
        ("Which single token is the most influential one for instance {id} {m}?", "filter id {id} and nlpattribute topk 1 {method}"),
    ],
    "rationalize": [
        ("Generate a natural language explanation for id {id}.", "filter id {id} and rationalize"),
        ("Clarify id {id} with a reason.", "filter id {id} and rationalize"),
        ("Explain in plain words why instance {id} got this label.", "filter id {id} and rationalize"),
        ("Can you rationalize the decision for data point {id}?", "filter id {id} and rationalize"),
        ("Give me a textual justification for id {id}.", "filter id {id} and rationalize"),
    ],
    "influence": [
        ("Show the most influential important data instance for id {id}.", "filter id {id} and influence topk 1"),
        ("Which training example influenced the prediction of instance {id} the most?", "filter id {id} and influence topk 1"),
        ("What are the top {n} influential training samples for id {id}?", "filter id {id} and influence topk {n}"),
        ("List the {n} most influential training points for data point {id}.", "filter id {id} and influence topk {n}"),
        ("Give me the top {nw} training instances that affect id {id}.", "filter id {id} and influence topk {n}"),
        ("Which training data had an influence on id {id}?", "filter id {id} and influence topk 1"),
    ],
    "cfe": [
        ("How would you flip the prediction for id {id}?", "filter id {id} and cfe"),
        ("Generate a counterfactual for instance {id}.", "filter id {id} and cfe"),
        ("What minimal change to id {id} would alter the outcome?", "filter id {id} and cfe"),
        ("Give me a counterfactual explanation of data point {id}.", "filter id {id} and cfe"),
        ("What if id {id} were written differently, would the label change?", "filter id {id} and cfe"),
    ],
    "adversarial": [
        ("How would you construct an adversarial example for the model's prediction on id {id}?", "filter id {id} and adversarial"),
        ("Create an adversarial attack for instance {id}.", "filter id {id} and adversarial"),
        ("Can you fool the model on id {id}?", "filter id {id} and adversarial"),
        ("Generate an adversarial input from data point {id}.", "filter id {id} and adversarial"),
    ],
    "augment": [
        ("Can you modify and generate a new instance from id {id}?", "filter id {id} and augment"),
        ("Augment instance {id} with a new variant.", "filter id {id} and augment"),
        ("Create a paraphrased copy of id {id}.", "filter id {id} and augment"),
        ("Generate additional data based on data point {id}.", "filter id {id} and augment"),
    ],
    "show": [
        ("Could you show me data point number {id}?", "filter id {id} and show"),
        ("Display the text of id {id}.", "filter id {id} and show"),
        ("What does instance {id} look like?", "filter id {id} and show"),
        ("Print the content of id {id}.", "filter id {id} and show"),
        ("Show me the instances labeled positive.", "labelfilter positive and show"),
        ("Show me the texts that contain the word delivery.", "includes delivery and show"),
    ],
    "countdata": [
        ("Count the total number of data points.", "countdata"),
        ("How many instances are in the dataset?", "countdata"),
        ("What is the size of the data?", "countdata"),
        ("How many examples do we have?", "countdata"),
        ("How many instances are labeled positive?", "labelfilter positive and countdata"),
        ("Count the data points the model predicts as negative.", "predfilter negative and countdata"),
        ("How many texts are longer than {n} sentences?", "lengthfilter sentence gt {n} and countdata"),
        ("How many instances mention the word terrible?", "includes terrible and countdata"),
        ("How many data points are labeled negative or predicted negative?", "labelfilter negative or predfilter negative and countdata"),
    ],
    "label": [
        ("Please show what the gold labels are.", "label"),
        ("What is the label distribution?", "label"),
        ("Describe the class balance of the dataset.", "label"),
        ("Which labels occur in the data and how often?", "label"),
        ("What labels do instances containing the word great have?", "includes great and label"),
    ],
    "keywords": [
        ("What are the most frequent keywords in the data?", "keywords topk 1"),
        ("Which word is the most common in the dataset?", "keywords topk 1"),
        ("Show the top {n} keywords.", "keywords topk {n}"),
        ("List the {n} most frequent words in the data.", "keywords topk {n}"),
        ("What are the top {nw} common terms?", "keywords topk {n}"),
        ("What are the top {n} keywords among instances labeled negative?", "labelfilter negative and keywords topk {n}"),
    ],
    "similarity": [
        ("Is it possible to retrieve an example that is similar to id {id}?", "filter id {id} and similarity topk 1"),
        ("Find the most similar instance to data point {id}.", "filter id {id} and similarity topk 1"),
        ("Show the top {n} similar examples for id {id}.", "filter id {id} and similarity topk {n}"),
        ("Give me {n} most similar texts to instance {id}.", "filter id {id} and similarity topk {n}"),
        ("Which data is close to id {id}?", "filter id {id} and similarity topk 1"),
        ("Retrieve the top {nw} neighbours of instance {id}.", "filter id {id} and similarity topk {n}"),
    ],
    "editlabel": [
        ("Edit the label of id {id} to the specified label.", "filter id {id} and editlabel"),
        ("Change the gold label of instance {id}.", "filter id {id} and editlabel"),
        ("The true label of data point {id} is wrong, please fix it.", "filter id {id} and editlabel"),
        ("Relabel id {id}.", "filter id {id} and editlabel"),
    ],
    "learn": [
        ("Apply training to the model using instance {id}.", "filter id {id} and learn"),
        ("Fine-tune the model on id {id}.", "filter id {id} and learn"),
        ("Retrain the classifier with data point {id}.", "filter id {id} and learn"),
        ("Update the model so it learns from id {id}.", "filter id {id} and learn"),
    ],
    "unlearn": [
        ("Can you unlearn id {id} from the model?", "filter id {id} and unlearn"),
        ("Remove instance {id} from what the model has learned.", "filter id {id} and unlearn"),
        ("Make the model forget data point {id}.", "filter id {id} and unlearn"),
        ("Erase the influence of id {id} on the model by unlearning it.", "filter id {id} and unlearn"),
    ],
    "function": [
        ("Tell me a bit more about what I can do here.", "function"),
        ("What can this system do?", "function"),
        ("Which functions are available?", "function"),
        ("How can you help me?", "function"),
        ("What kinds of questions can I ask?", "function"),
    ],
    "qatutorial": [
        ("What's data augmentation?", "qatutorial qada"),
        ("What is feature attribution?", "qatutorial qaattribute"),
        ("Explain what a rationalization is.", "qatutorial qarationalize"),
        ("How do influence functions work?", "qatutorial qainfluence"),
        ("What is a counterfactual explanation?", "qatutorial qacfe"),
        ("What does adversarial mean in this context?", "qatutorial qaadversarial"),
        ("What does editing a label do?", "qatutorial qaeditlabel"),
        ("What happens when the model learns from an instance?", "qatutorial qalearn"),
        ("What is unlearning?", "qatutorial qaunlearn"),
        ("Can you describe how augmentation of data works?", "qatutorial qaaugment"),
        ("Tell me about counterfactuals.", "qatutorial qacfe"),
        ("What are attribution scores?", "qatutorial qaattribute"),
    ],
    "data": [
        ("Tell me a bit more about the data please.", "data"),
        ("What dataset is this?", "data"),
        ("Describe the dataset.", "data"),
        ("Where does the data come from?", "data"),
    ],
    "model": [
        ("It would be very useful if you could provide a description of the model!", "model"),
        ("What model are you using?", "model"),
        ("Describe the classifier architecture.", "model"),
        ("Which language model is behind this?", "model"),
    ],
    "domain": [
        ("Can you clarify terms or concepts that are relevant to the domain but not directly related to the system's functionality?", "domain"),
        ("What is sentiment analysis in general?", "domain"),
        ("What does the term polarity mean?", "domain"),
        ("What is a tokenizer?", "domain"),
    ],
}

TEST = {
    "predict": [
        ("Predict id {id}.", "filter id {id} and predict"),
        ("What label would you give to instance {id}?", "filter id {id} and predict"),
    ],
    "likelihood": [
        ("How likely is the predicted label for id {id}?", "filter id {id} and likelihood"),
        ("What is your confidence on data point {id}?", "filter id {id} and likelihood"),
    ],
    "mistake": [
        ("Can you show me how much data the model predicts incorrectly?", "mistake count"),
        ("Show me examples that are predicted incorrectly.", "mistake sample"),
        ("How many wrong predictions occur for texts with more than {n}0 tokens?", "lengthfilter token gt {n}0 and mistake count"),
    ],
    "score": [
        ("What is the model's accuracy?", "score accuracy"),
        ("Show me the precision.", "score precision"),
        ("Report the recall on instances labeled negative.", "labelfilter negative and score recall"),
        ("Tell me the f1 score on the data.", "score f1"),
    ],
    "nlpattribute": [
        ("Top {n} important features for id {id}!", "filter id {id} and nlpattribute topk {n} default"),
        ("Why was id {id} predicted like that?", "filter id {id} and nlpattribute all default"),
        ("Feature importances for instance {id} {m}.", "filter id {id} and nlpattribute all {method}"),
        ("Give me the top {n} tokens of data point {id} {m}.", "filter id {id} and nlpattribute topk {n} {method}"),
        ("Which word is the most important for id {id}?", "filter id {id} and nlpattribute topk 1 default"),
    ],
    "rationalize": [
        ("Why id {id}? Explain with a sentence.", "filter id {id} and rationalize"),
        ("Provide a rationale for instance {id}.", "filter id {id} and rationalize"),
    ],
    "influence": [
        ("What are the {n} most influential training examples for id {id}?", "filter id {id} and influence topk {n}"),
        ("Which training instance is most influential for data point {id}?", "filter id {id} and influence topk 1"),
    ],
    "cfe": [
        ("How could instance {id} be changed to get another prediction?", "filter id {id} and cfe"),
    ],
    "adversarial": [
        ("Produce an adversarial example of id {id}.", "filter id {id} and adversarial"),
    ],
    "augment": [
        ("Generate a new augmented sample from instance {id}.", "filter id {id} and augment"),
    ],
    "show": [
        ("Show id {id}.", "filter id {id} and show"),
        ("Let me see data point {id}.", "filter id {id} and show"),
    ],
    "countdata": [
        ("How many data points are there?", "countdata"),
        ("How many instances are predicted positive?", "predfilter positive and countdata"),
    ],
    "label": [
        ("Show the distribution of labels.", "label"),
    ],
    "keywords": [
        ("What are the top {n} most frequent keywords?", "keywords topk {n}"),
        ("What is the most frequent word?", "keywords topk 1"),
    ],
    "similarity": [
        ("Show me {n} most similar instances to id {id}.", "filter id {id} and similarity topk {n}"),
        ("What is similar to instance {id}?", "filter id {id} and similarity topk 1"),
    ],
    "editlabel": [
        ("Please change the label of id {id}.", "filter id {id} and editlabel"),
    ],
    "learn": [
        ("Train the model further on instance {id}.", "filter id {id} and learn"),
    ],
    "unlearn": [
        ("Unlearn data point {id}.", "filter id {id} and unlearn"),
    ],
    "function": [
        ("What are your capabilities?", "function"),
    ],
    "qatutorial": [
        ("Explain feature attribution to me.", "qatutorial qaattribute"),
        ("What is unlearning in machine learning?", "qatutorial qaunlearn"),
        ("What is an adversarial example?", "qatutorial qaadversarial"),
    ],
    "data": [
        ("Give me information about the dataset.", "data"),
    ],
    "model": [
        ("Tell me about the model.", "model"),
    ],
    "domain": [
        ("What does the word sarcasm mean?", "domain"),
    ],
}

ANCHOR_IDS = {9130, 15, 2451, 2222, 912, 23, 100, 215, 12, 2894, 473, 530}


def expand(templates, rng, copies):
    out = []
    for intent, rows in templates.items():
        for question, parse in rows:
            fixed = "{" not in question
            reps = 1 if fixed else copies
            for _ in range(reps):
                n = rng.choice([2, 3, 4, 5, 6, 7, 8, 10])
                method = rng.choice(sorted(METHOD_PHRASES))
                values = {
                    "id": rng.randint(0, 9999),
                    "n": n,
                    "nw": NUMBER_WORDS[n],
                    "m": rng.choice(METHOD_PHRASES[method]),
                    "method": method,
                }
                q = question.format(**values)
                p = parse.format(**values)
                out.append({"question": q, "parse": p})
    return out


def main():
    rng = random.Random(20241014)
    train = expand(TRAIN, rng, copies=3)
    # anchor utterances keep their original ids
    anchors = [
        ("What is the prediction for data point number 9130?", "filter id 9130 and predict"),
        ("Give me the confidence score for this prediction on id 15?", "filter id 15 and likelihood"),
        ("Why do you predict instance 2451?", "filter id 2451 and nlpattribute default"),
        ("Generate a natural language explanation for id 2222.", "filter id 2222 and rationalize"),
        ("Show the most influential important data instance for id 912.", "filter id 912 and influence topk 1"),
        ("How would you flip the prediction for id 23?", "filter id 23 and cfe"),
        ("How would you construct an adversarial example for the model's prediction on id 23?", "filter id 23 and adversarial"),
        ("Can you modify and generate a new instance from id 100?", "filter id 100 and augment"),
        ("Could you show me data point number 215?", "filter id 215 and show"),
        ("Is it possible to retrieve an example that is similar to id 12?", "filter id 12 and similarity topk 1"),
        ("Edit the label of id 2894 to the specified label.", "filter id 2894 and editlabel"),
        ("Apply training to the model using instance 473.", "filter id 473 and learn"),
        ("Can you unlearn id 530 from the model?", "filter id 530 and unlearn"),
        ("Why do you predict instance id 31 using input gradient?", "filter id 31 and nlpattribute all input_x_gradient"),
    ]
    train = [{"question": q, "parse": p} for q, p in anchors] + train
    rng = random.Random(3)
    test = expand(TEST, rng, copies=2)
    test.append({"question": "Top 3 important features for id 3!", "parse": "filter id 3 and nlpattribute topk 3 default"})
    test.append({"question": "Clarify id 5678 with a reason.", "parse": "filter id 5678 and rationalize"})

    seen, dedup = set(), []
    for rec in train:
        if rec["question"] not in seen:
            seen.add(rec["question"])
            dedup.append(rec)
    train = dedup
    test_seen, test_dedup = set(), []
    for rec in test:
        if rec["question"] not in seen and rec["question"] not in test_seen:
            test_seen.add(rec["question"])
            test_dedup.append(rec)
    test = test_dedup

    OUT.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train", train), ("test", test)):
        path = OUT / f"sample_{name}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for rec in rows:
                fh.write(json.dumps(rec) + "\n")
        print(f"{path}: {len(rows)} records")


if __name__ == "__main__":
    main()
