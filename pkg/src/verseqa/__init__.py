"""verseqa: answer-sentence selection over Bible verses.

Scores candidate verses against a question with three small neural models
(LSTM pair encoder, convolutional pair encoder, simplified bidirectional
attention flow), built on an in-package autodiff tensor library. Includes
CBOW word-vector training, cross-domain weight transfer, dataset
construction, and F1/MRR evaluation.
"""

__version__ = "0.1.0"
