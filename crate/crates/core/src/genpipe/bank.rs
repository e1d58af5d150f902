//! Parameterized lab question templates for the AIML topic set.
//!
//! A question is assembled from a tier-specific opening, a handful of
//! requirement clauses, one topic-specific clause and one variation clause.
//! Slots (`{kw}`, `{dataset}`, `{hyper}`, ...) are filled from seeded draws.

use crate::domain::Difficulty;

pub(crate) struct Topic {
    pub key: &'static str,
    pub name: &'static str,
    /// Normalized phrases (lowercase tokens joined by single spaces).
    pub aliases: &'static [&'static str],
    pub datasets: &'static [&'static str],
    pub metrics: &'static [&'static str],
    pub hyper: &'static str,
    pub values: &'static [&'static str],
    pub extras: &'static [&'static str],
    pub concept: &'static str,
    pub code: &'static str,
    pub viva: &'static [(&'static str, &'static str)],
}

const CLASSIFICATION_DATA: &[&str] = &[
    "Iris", "Wine", "Breast Cancer Wisconsin", "Titanic", "Pima Indians Diabetes", "Heart Disease",
    "Adult Income", "Bank Marketing", "Mushroom", "Digits",
];
const REGRESSION_DATA: &[&str] = &[
    "California Housing", "Diabetes progression", "Auto MPG", "Bike Sharing", "Energy Efficiency",
    "Concrete Compressive Strength", "Wine Quality", "Insurance Charges",
];
const IMAGE_DATA: &[&str] = &["MNIST", "Fashion-MNIST", "CIFAR-10", "SVHN", "KMNIST", "EMNIST letters"];
const SEQUENCE_DATA: &[&str] = &[
    "IMDB reviews", "Air Passengers", "daily minimum temperatures", "Shakespeare text", "sunspot counts",
    "household power consumption", "Reuters newswire",
];
const CLASSIFICATION_METRICS: &[&str] = &["accuracy", "macro F1 score", "ROC AUC", "balanced accuracy", "precision and recall"];
const REGRESSION_METRICS: &[&str] = &["RMSE", "mean absolute error", "R squared", "median absolute error"];

pub(crate) const TOPICS: &[Topic] = &[
    Topic {
        key: "decision_tree",
        name: "decision tree",
        aliases: &["decision tree", "decision trees", "cart", "id3"],
        datasets: CLASSIFICATION_DATA,
        metrics: CLASSIFICATION_METRICS,
        hyper: "max_depth",
        values: &["3", "4", "5", "6", "8", "10"],
        extras: &[
            "Visualize the learned tree and explain the first two splits in plain language.",
            "Compare the Gini impurity and entropy split criteria on the same split.",
            "Apply cost complexity pruning and plot accuracy against the pruning strength.",
        ],
        concept: "A decision tree recursively splits the feature space on the threshold that most reduces impurity and predicts with the majority label of each leaf.",
        code: "from sklearn.tree import DecisionTreeClassifier\nmodel = DecisionTreeClassifier(max_depth={value}, random_state=42)",
        viva: &[
            ("How does a decision tree choose the feature and threshold for a split?", "It evaluates candidate thresholds for every feature and picks the split with the largest impurity reduction measured by Gini impurity or entropy information gain."),
            ("Why do deep decision trees overfit and how can you prevent it?", "Deep trees memorize noise in small leaves; limiting max depth, requiring minimum samples per leaf or pruning reduces variance and overfitting."),
            ("What is the difference between Gini impurity and entropy?", "Both measure node impurity; Gini is one minus the sum of squared class probabilities while entropy is the negative sum of p log p, and they usually give similar splits."),
            ("How would you interpret feature importance from a trained tree?", "Feature importance sums the impurity decrease contributed by splits on each feature weighted by the samples reaching those nodes."),
        ],
    },
    Topic {
        key: "random_forest",
        name: "random forest",
        aliases: &["random forest", "random forests", "bagging"],
        datasets: CLASSIFICATION_DATA,
        metrics: CLASSIFICATION_METRICS,
        hyper: "n_estimators",
        values: &["50", "100", "150", "200", "300", "500"],
        extras: &[
            "Report the out-of-bag score and compare it with the test score.",
            "Plot permutation feature importance for the five strongest features.",
            "Show how the score changes as max_features varies between sqrt and log2.",
        ],
        concept: "A random forest averages many decision trees trained on bootstrap samples with random feature subsets, which lowers variance compared with a single tree.",
        code: "from sklearn.ensemble import RandomForestClassifier\nmodel = RandomForestClassifier(n_estimators={value}, random_state=42)",
        viva: &[
            ("Why does a random forest usually generalize better than a single decision tree?", "Averaging many decorrelated trees built on bootstrap samples and random feature subsets reduces variance while keeping bias low."),
            ("What is the out-of-bag error?", "Each tree is evaluated on the samples left out of its bootstrap sample, giving a validation estimate without a separate holdout set."),
            ("What role does max_features play in a random forest?", "It limits how many features each split may consider, decorrelating the trees; smaller values increase diversity but may raise bias."),
            ("How does the number of trees affect a random forest?", "More trees reduce variance of the averaged prediction until it plateaus, at the cost of training time and memory."),
        ],
    },
    Topic {
        key: "knn",
        name: "k-nearest neighbors",
        aliases: &["k nearest neighbors", "k nearest neighbours", "k nearest neighbor", "knn", "nearest neighbors", "nearest neighbour"],
        datasets: CLASSIFICATION_DATA,
        metrics: CLASSIFICATION_METRICS,
        hyper: "k",
        values: &["3", "5", "7", "9", "11", "15"],
        extras: &[
            "Compare Euclidean and Manhattan distance and explain which works better here.",
            "Plot the validation score as a function of k from 1 to 25.",
            "Use distance weighted voting and compare it with uniform voting.",
        ],
        concept: "k-nearest neighbors stores the training set and predicts the majority label among the k closest points under a distance metric, so feature scaling matters.",
        code: "from sklearn.neighbors import KNeighborsClassifier\nmodel = KNeighborsClassifier(n_neighbors={value})",
        viva: &[
            ("Why must features be scaled before applying k-nearest neighbors?", "Distances are dominated by features with large ranges, so standardization puts all features on a comparable scale for the neighbor search."),
            ("How does the choice of k affect bias and variance?", "Small k gives low bias and high variance with noisy boundaries, while large k smooths the boundary, raising bias and lowering variance."),
            ("What is the computational cost of predicting with k-nearest neighbors?", "Prediction computes distances to all stored training points, which is linear in the training set size unless a tree or index structure is used."),
            ("What is the curse of dimensionality in nearest neighbor methods?", "In high dimensions distances concentrate and all points look equally far, so neighbors become less informative."),
        ],
    },
    Topic {
        key: "svm",
        name: "support vector machine",
        aliases: &["support vector machine", "support vector machines", "svm", "svc"],
        datasets: CLASSIFICATION_DATA,
        metrics: CLASSIFICATION_METRICS,
        hyper: "the regularization parameter C",
        values: &["0.1", "0.5", "1", "5", "10", "100"],
        extras: &[
            "Compare the linear, polynomial and RBF kernels on the same split.",
            "Plot the decision boundary on two principal components of the data.",
            "Tune gamma for the RBF kernel on a logarithmic grid.",
        ],
        concept: "A support vector machine finds the maximum margin hyperplane; the kernel trick maps inputs to a higher dimensional space and C trades margin width against training errors.",
        code: "from sklearn.svm import SVC\nmodel = SVC(C={value}, kernel=\"rbf\")",
        viva: &[
            ("What are support vectors?", "Support vectors are the training points closest to the decision boundary that lie on or inside the margin and determine the hyperplane."),
            ("What does the kernel trick do?", "It computes inner products in a high dimensional feature space through a kernel function without explicitly mapping the data, enabling nonlinear boundaries."),
            ("How does the parameter C influence the margin?", "Large C penalizes misclassification heavily and gives a narrow margin, while small C allows more violations and a wider, smoother margin."),
            ("Why is feature scaling important for support vector machines?", "The margin and RBF kernel depend on distances, so unscaled features distort the geometry and the optimization."),
        ],
    },
    Topic {
        key: "linear_regression",
        name: "linear regression",
        aliases: &["linear regression", "regression", "ridge regression", "lasso", "least squares", "polynomial regression"],
        datasets: REGRESSION_DATA,
        metrics: REGRESSION_METRICS,
        hyper: "the ridge penalty alpha",
        values: &["0.01", "0.1", "0.5", "1", "10", "50"],
        extras: &[
            "Derive the normal equation and check it against gradient descent.",
            "Plot residuals against fitted values and comment on heteroscedasticity.",
            "Compare ordinary least squares with ridge and lasso coefficients.",
        ],
        concept: "Linear regression fits weights minimizing the squared error between predictions and targets; ridge and lasso add L2 or L1 penalties to shrink coefficients.",
        code: "from sklearn.linear_model import Ridge\nmodel = Ridge(alpha={value})",
        viva: &[
            ("What assumptions does ordinary least squares regression make?", "It assumes a linear relationship, independent errors with constant variance, and no perfect multicollinearity among the features."),
            ("What is the difference between ridge and lasso regression?", "Ridge adds an L2 penalty that shrinks coefficients smoothly, while lasso adds an L1 penalty that can set coefficients exactly to zero."),
            ("How do you interpret the R squared value?", "R squared is the fraction of target variance explained by the model, one minus the residual sum of squares over the total sum of squares."),
            ("What does a residual plot tell you?", "Residuals should scatter randomly around zero; patterns indicate nonlinearity or changing variance that the model misses."),
        ],
    },
    Topic {
        key: "logistic_regression",
        name: "logistic regression",
        aliases: &["logistic regression", "logit", "softmax regression"],
        datasets: CLASSIFICATION_DATA,
        metrics: CLASSIFICATION_METRICS,
        hyper: "the inverse regularization strength C",
        values: &["0.01", "0.1", "1", "10", "100"],
        extras: &[
            "Implement the sigmoid and cross entropy loss and verify the gradient numerically.",
            "Plot the precision recall curve and choose a decision threshold.",
            "Interpret the learned coefficients as odds ratios.",
        ],
        concept: "Logistic regression models class probability with a sigmoid of a linear score and is trained by minimizing cross entropy loss.",
        code: "from sklearn.linear_model import LogisticRegression\nmodel = LogisticRegression(C={value}, max_iter=1000)",
        viva: &[
            ("Why is cross entropy used instead of squared error for logistic regression?", "Cross entropy is the negative log likelihood of a Bernoulli model and is convex for the sigmoid, giving well behaved gradients."),
            ("How do you turn predicted probabilities into class labels?", "Apply a decision threshold, usually 0.5, which can be tuned on a precision recall curve to trade false positives against false negatives."),
            ("What does a coefficient mean in logistic regression?", "Each coefficient is the change in log odds per unit increase of the feature, so its exponential is an odds ratio."),
            ("How is logistic regression extended to more than two classes?", "Use one versus rest classifiers or softmax regression that normalizes exponentiated scores across classes."),
        ],
    },
    Topic {
        key: "naive_bayes",
        name: "naive Bayes",
        aliases: &["naive bayes", "bayes classifier", "gaussian naive bayes"],
        datasets: &["SMS Spam", "20 Newsgroups", "Iris", "Mushroom", "Wine", "Adult Income"],
        metrics: CLASSIFICATION_METRICS,
        hyper: "the smoothing parameter alpha",
        values: &["0.1", "0.5", "1", "2"],
        extras: &[
            "Implement Laplace smoothing yourself and show what happens without it.",
            "Compare Gaussian and multinomial variants where the data allows.",
            "Inspect the class conditional likelihoods of the top five features.",
        ],
        concept: "Naive Bayes applies Bayes theorem with the assumption that features are conditionally independent given the class.",
        code: "from sklearn.naive_bayes import MultinomialNB\nmodel = MultinomialNB(alpha={value})",
        viva: &[
            ("What is the naive assumption in naive Bayes?", "Features are assumed conditionally independent given the class, so the likelihood factorizes into a product of per feature terms."),
            ("Why is Laplace smoothing needed?", "Without smoothing an unseen feature value gets zero probability and wipes out the whole product, so a pseudo count is added."),
            ("Why does naive Bayes work well for text classification?", "Word counts are high dimensional and sparse, and the independence model is cheap to train while still ranking classes well."),
            ("Why are log probabilities used in implementation?", "Multiplying many small probabilities underflows, so summing log probabilities keeps the computation numerically stable."),
        ],
    },
    Topic {
        key: "kmeans",
        name: "k-means clustering",
        aliases: &["k means", "kmeans", "clustering", "k means clustering"],
        datasets: &["Iris", "Mall Customers", "Wholesale customers", "Digits", "Wine", "Online Retail"],
        metrics: &["silhouette score", "inertia", "Davies Bouldin index", "adjusted Rand index"],
        hyper: "the number of clusters k",
        values: &["2", "3", "4", "5", "6", "8"],
        extras: &[
            "Use the elbow method and the silhouette score to justify the number of clusters.",
            "Implement k-means++ initialization and compare it with random initialization.",
            "Visualize the clusters on the first two principal components.",
        ],
        concept: "k-means alternates between assigning points to the nearest centroid and moving each centroid to the mean of its assigned points, minimizing within cluster variance.",
        code: "from sklearn.cluster import KMeans\nmodel = KMeans(n_clusters={value}, n_init=10, random_state=42)",
        viva: &[
            ("Describe the two alternating steps of the k-means algorithm.", "Assign every point to its nearest centroid, then recompute each centroid as the mean of its assigned points, repeating until assignments stop changing."),
            ("How do you choose the number of clusters?", "Use the elbow of the inertia curve, silhouette scores or domain knowledge to pick k."),
            ("Why does initialization matter in k-means?", "The objective is nonconvex so poor initial centroids lead to bad local minima; k-means++ spreads initial centroids out."),
            ("What cluster shapes does k-means struggle with?", "It assumes roughly spherical clusters of similar size, so elongated or nested clusters are split incorrectly."),
        ],
    },
    Topic {
        key: "pca",
        name: "principal component analysis",
        aliases: &["principal component analysis", "pca", "dimensionality reduction"],
        datasets: &["Digits", "Wine", "Breast Cancer Wisconsin", "Olivetti faces", "MNIST", "Iris"],
        metrics: &["explained variance ratio", "reconstruction error", "downstream accuracy"],
        hyper: "the number of components",
        values: &["2", "3", "5", "10", "20", "50"],
        extras: &[
            "Implement principal component analysis through the eigen decomposition of the covariance matrix.",
            "Plot the cumulative explained variance and pick the number of components for 95 percent.",
            "Reconstruct a few samples from the reduced space and show the reconstruction error.",
        ],
        concept: "Principal component analysis projects centered data onto the orthogonal directions of maximal variance, the leading eigenvectors of the covariance matrix.",
        code: "from sklearn.decomposition import PCA\nmodel = PCA(n_components={value})",
        viva: &[
            ("What do the principal components represent?", "They are orthogonal directions of maximum variance, the eigenvectors of the data covariance matrix ordered by eigenvalue."),
            ("Why must data be centered before principal component analysis?", "Variance directions are defined around the mean; without centering the first component just points to the mean."),
            ("How do you choose the number of components to keep?", "Keep enough components to reach a target cumulative explained variance, such as 95 percent, or use a scree plot elbow."),
            ("What is lost when data is projected onto fewer components?", "Variance along discarded directions is lost, which appears as reconstruction error."),
        ],
    },
    Topic {
        key: "mlp",
        name: "feedforward neural network",
        aliases: &["feedforward neural network", "feedforward network", "neural network", "neural networks", "artificial neural network", "deep neural network", "deep neural networks", "ann", "dnn", "mlp", "multilayer perceptron", "perceptron", "backpropagation", "deep learning"],
        datasets: &["MNIST", "Fashion-MNIST", "Breast Cancer Wisconsin", "Adult Income", "Digits", "California Housing"],
        metrics: &["accuracy", "cross entropy loss", "macro F1 score", "RMSE"],
        hyper: "the number of hidden units",
        values: &["16", "32", "64", "128", "256"],
        extras: &[
            "Implement backpropagation for one hidden layer by hand and check it with numerical gradients.",
            "Compare ReLU, tanh and sigmoid activations.",
            "Add dropout and batch normalization and measure their effect on validation loss.",
        ],
        concept: "A feedforward neural network stacks affine layers with nonlinear activations and is trained with backpropagation and gradient descent on a loss function.",
        code: "import torch.nn as nn\nmodel = nn.Sequential(nn.Linear(n_in, {value}), nn.ReLU(), nn.Linear({value}, n_out))",
        viva: &[
            ("What is backpropagation?", "Backpropagation applies the chain rule layer by layer from the loss backwards to compute gradients of all weights efficiently."),
            ("Why are nonlinear activation functions necessary?", "Without nonlinearities a stack of linear layers collapses to one linear map and cannot represent complex functions."),
            ("What causes vanishing gradients?", "Repeated multiplication by small derivatives, as with saturated sigmoid or tanh units, shrinks gradients in early layers."),
            ("How does dropout reduce overfitting?", "Randomly zeroing activations during training prevents co adaptation of units and acts like averaging many thinned networks."),
        ],
    },
    Topic {
        key: "cnn",
        name: "convolutional neural network",
        aliases: &["convolutional neural network", "convolutional neural networks", "cnn", "convnet", "convolution", "image classification"],
        datasets: IMAGE_DATA,
        metrics: &["top-1 accuracy", "macro F1 score", "per class accuracy", "cross entropy loss"],
        hyper: "the number of convolutional layers",
        values: &["2", "3", "4", "5"],
        extras: &[
            "Visualize the filters of the first convolutional layer.",
            "Add data augmentation with random crops and flips and compare validation accuracy.",
            "Replace max pooling with strided convolutions and discuss the difference.",
        ],
        concept: "A convolutional neural network learns local filters shared across spatial positions, followed by pooling and dense layers for classification.",
        code: "import torch.nn as nn\nlayers = [nn.Conv2d(c, c, 3, padding=1) for _ in range({value})]\nmodel = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(c, n_classes))",
        viva: &[
            ("Why do convolutional layers need fewer parameters than dense layers on images?", "Filters are small and shared across all spatial positions, so the parameter count does not grow with image size."),
            ("What does a pooling layer do?", "Pooling downsamples feature maps by taking the max or average over local windows, adding translation invariance and reducing computation."),
            ("What is the receptive field of a neuron?", "It is the region of the input image that influences the neuron, growing with depth, kernel size and stride."),
            ("How does data augmentation help a convolutional network?", "Random crops, flips and color changes create new training views, reducing overfitting and improving invariance."),
        ],
    },
    Topic {
        key: "rnn",
        name: "recurrent neural network",
        aliases: &["recurrent neural network", "recurrent neural networks", "rnn", "gru", "sequence model", "sequence modeling"],
        datasets: SEQUENCE_DATA,
        metrics: &["accuracy", "perplexity", "RMSE", "mean absolute error"],
        hyper: "the hidden state size",
        values: &["32", "64", "128", "256"],
        extras: &[
            "Implement the forward pass of a vanilla recurrent cell in NumPy.",
            "Apply gradient clipping and show the gradient norm over training.",
            "Compare a vanilla recurrent cell with a GRU cell of the same size.",
        ],
        concept: "A recurrent neural network processes a sequence step by step, updating a hidden state from the previous state and the current input with shared weights.",
        code: "import torch.nn as nn\nmodel = nn.RNN(input_size=n_in, hidden_size={value}, batch_first=True)",
        viva: &[
            ("How does a recurrent network carry information across time steps?", "The hidden state is updated at each step from the previous hidden state and the current input using the same weights, acting as memory."),
            ("What is backpropagation through time?", "The network is unrolled over the sequence and gradients are propagated backwards through every time step."),
            ("Why is gradient clipping used for recurrent networks?", "Long products of Jacobians can explode, so clipping the gradient norm keeps updates stable."),
            ("Why do vanilla recurrent networks struggle with long range dependencies?", "Gradients vanish over many steps, so signals from distant inputs barely affect learning."),
        ],
    },
    Topic {
        key: "lstm",
        name: "long short-term memory network",
        aliases: &["long short term memory", "lstm", "lstms", "long short term memory network"],
        datasets: SEQUENCE_DATA,
        metrics: &["accuracy", "RMSE", "mean absolute percentage error", "perplexity"],
        hyper: "the sequence window length",
        values: &["10", "20", "30", "50", "100"],
        extras: &[
            "Explain the role of the input, forget and output gates using your trained model.",
            "Stack two LSTM layers and compare with a single layer.",
            "Forecast several steps ahead and plot predictions against the true series.",
        ],
        concept: "An LSTM adds a cell state controlled by input, forget and output gates, letting gradients flow across long sequences.",
        code: "import torch.nn as nn\nmodel = nn.LSTM(input_size=n_in, hidden_size=64, batch_first=True)\nwindow = {value}",
        viva: &[
            ("What problem do LSTM gates solve?", "The gated cell state lets the network keep or forget information additively, which mitigates vanishing gradients over long sequences."),
            ("What does the forget gate do?", "It outputs values between zero and one that scale the previous cell state, deciding which memory to keep."),
            ("How do you prepare a time series for an LSTM?", "Scale the series, then build sliding windows of fixed length as inputs with the following value as the target."),
            ("How does an LSTM differ from a GRU?", "A GRU merges the forget and input gates into an update gate and has no separate cell state, so it has fewer parameters."),
        ],
    },
    Topic {
        key: "optimizers",
        name: "gradient-based optimization",
        aliases: &["gradient descent", "stochastic gradient descent", "sgd", "adam", "optimizer", "optimizers", "optimization", "optimization techniques", "momentum", "learning rate"],
        datasets: &["MNIST", "California Housing", "Breast Cancer Wisconsin", "Fashion-MNIST", "Rosenbrock function"],
        metrics: &["final training loss", "validation loss", "epochs to convergence", "accuracy"],
        hyper: "the learning rate",
        values: &["0.1", "0.05", "0.01", "0.005", "0.001"],
        extras: &[
            "Implement SGD with momentum and Adam by hand and plot their loss curves together.",
            "Add a learning rate schedule and compare step decay with cosine annealing.",
            "Visualize optimizer trajectories on a two dimensional loss surface.",
        ],
        concept: "Gradient descent updates parameters against the gradient of the loss; momentum and Adam accumulate gradient statistics to speed up and stabilize convergence.",
        code: "import torch\noptimizer = torch.optim.Adam(model.parameters(), lr={value})",
        viva: &[
            ("How does momentum change gradient descent?", "Momentum keeps an exponentially decaying average of past gradients, damping oscillations and accelerating progress along consistent directions."),
            ("What does Adam keep track of?", "Adam keeps running averages of the gradient and squared gradient with bias correction, giving per parameter adaptive step sizes."),
            ("What happens if the learning rate is too large or too small?", "Too large makes the loss diverge or oscillate; too small makes convergence very slow or stuck."),
            ("Why use mini batches instead of the full dataset?", "Mini batches give cheap noisy gradient estimates, allowing more updates per epoch and helping escape poor regions."),
        ],
    },
];

/// Used when no topic matches the requested keyword.
pub(crate) const GENERIC_TOPIC: Topic = Topic {
    key: "generic",
    name: "",
    aliases: &[],
    datasets: &["Iris", "Wine", "Titanic", "California Housing", "MNIST", "Adult Income", "Digits", "Bank Marketing"],
    metrics: &["accuracy", "macro F1 score", "RMSE", "mean absolute error"],
    hyper: "its main hyperparameter",
    values: &["a small value", "a moderate value", "a large value", "the library default"],
    extras: &[
        "Explain in a short paragraph which part of the method is most sensitive to its settings.",
        "Compare your approach with the simplest reasonable baseline.",
        "Describe one failure case you observed and how you would fix it.",
    ],
    concept: "The solution should load and preprocess the data, apply the requested technique, and evaluate it on held-out data with a clear metric.",
    code: "model = build_model()  # apply the requested technique",
    viva: &[],
};

pub(crate) const GENERIC_VIVA: &[(&str, &str)] = &[
    ("Explain the main idea behind {kw} in your own words.", "{kw} is applied by preparing the data, fitting the method on training data and evaluating it on held out data with a suitable metric."),
    ("How did you split the data for training and evaluation, and why?", "The data is split into training and test sets, possibly with cross validation, so the evaluation measures generalization to unseen samples."),
    ("Which metric did you report and why is it appropriate for this problem?", "The metric should match the task, such as accuracy or F1 for classification and RMSE for regression, and reflect the cost of errors."),
    ("How would you detect overfitting in your solution?", "Compare training and validation scores; a large gap or rising validation loss indicates overfitting."),
    ("What would you change to improve your result?", "Tune hyperparameters with cross validation, engineer better features, collect more data or try a stronger model."),
];

pub(crate) const OPENINGS: [&[&str]; 3] = [
    // Easy
    &[
        "Using scikit-learn or an equivalent library, train a {kw} model on the {dataset} dataset with {hyper} set to {value} and report the {metric} on a held-out test set.",
        "Load the {dataset} dataset, apply {kw} with {hyper} equal to {value}, and print the {metric} obtained on a {split} train/test split.",
        "Write a short Python program that fits {kw} to the {dataset} data (use {hyper} = {value}) and evaluates it with {metric}.",
        "Build a basic {kw} pipeline for the {dataset} dataset: preprocess the features, fit the model with {hyper} = {value}, and report {metric}.",
        "Apply {kw} to the {dataset} data as a first experiment, keeping {hyper} fixed at {value}, and summarize the resulting {metric} in one sentence.",
    ],
    // Medium
    &[
        "Implement a {kw} workflow on the {dataset} dataset and tune {hyper} over {grid} candidate values around {value} with {folds}-fold cross-validation, reporting {metric} for each setting.",
        "Compare {kw} against a simple baseline on the {dataset} dataset, starting from {hyper} = {value}, and explain the difference in {metric}.",
        "Design an experiment on the {dataset} dataset that measures how {hyper} influences {kw}, sweeping {grid} values including {value}, and plot {metric} against the setting.",
        "Create a reproducible {kw} training script for {dataset} with a {split} split, select {hyper} (start at {value}) using validation {metric}, and justify your final choice.",
        "Wrap {kw} in a preprocessing pipeline for the {dataset} data, search {hyper} near {value} with {folds} folds, and report the best {metric} with its spread.",
    ],
    // Hard
    &[
        "Implement {kw} from scratch in NumPy without high-level model classes, validate it on the {dataset} dataset with {hyper} = {value}, and compare your {metric} with a library implementation.",
        "Build your own {kw} implementation, profile its training cost on the {dataset} dataset as {hyper} grows beyond {value}, and analyse the trade-off against {metric}.",
        "Write a from-scratch {kw} module with clean interfaces, test it on {dataset} using {folds}-fold cross-validation at {hyper} = {value}, and discuss where your {metric} differs from a reference library.",
        "Extend a hand-written {kw} implementation with one improvement of your choice, run an ablation on the {dataset} dataset with {hyper} = {value}, and report {metric} for each variant.",
        "Reimplement the core training loop of {kw} yourself, verify it matches a library version on {dataset} within a small tolerance, then study {metric} across {grid} settings of {hyper} around {value}.",
    ],
];

pub(crate) const REQUIREMENTS: &[&str] = &[
    "Standardize the numeric features before training and explain why it matters for this model.",
    "Plot the learning curve as the number of training samples grows.",
    "Log the training time and the prediction latency of the final model.",
    "Handle missing values explicitly instead of silently dropping rows.",
    "Fix the random seed to {seed_val} so that every result is reproducible.",
    "Write unit tests for the data loading and preprocessing functions.",
    "Report the mean and standard deviation of {metric} over {repeats} repeated runs.",
    "Visualize which input features influence the predictions most.",
    "Save the trained model to disk and reload it to confirm identical predictions.",
    "Expose {hyper} as a command-line argument of your script.",
    "Document every function with a docstring describing its inputs and outputs.",
    "Check for overfitting by comparing training and validation scores side by side.",
    "Use a stratified split so that class proportions are preserved where applicable.",
    "Print a table that summarizes each configuration you tried together with its score.",
    "Inject {noise} percent label noise into the training data and measure how far {metric} drops.",
    "Keep every function shorter than {max_lines} lines.",
    "Compare two preprocessing strategies and justify the one you keep.",
    "Discuss one limitation of the dataset that could bias your conclusions.",
];

pub(crate) const VARIATIONS: &[&str] = &[
    "Restrict training to the first {subset} percent of the available samples.",
    "Assume deployment hardware with only {memory} MB of memory and keep the model within that budget.",
    "Add polynomial features of degree {degree} before fitting and comment on the effect.",
    "Remove the two most strongly correlated features before training.",
    "Report results separately for the smallest and the largest class or target range.",
    "Use early stopping or an equivalent guard against overfitting.",
    "Balance the training data by oversampling the rarest class first.",
    "Evaluate robustness by adding Gaussian noise with standard deviation {sigma} to the test inputs.",
    "Use only the {n_features} features ranked highest by mutual information.",
    "Write the final evaluation as a reusable function that takes the model and the data split as arguments.",
    "Present the results as a short markdown report with exactly one figure.",
    "Shuffle the feature columns randomly and verify that your results do not change.",
    "Time-box hyperparameter search to {budget} minutes of compute and explain how you spent it.",
    "Produce a calibration plot of predicted scores against observed outcomes.",
];

pub(crate) const SPLITS: &[&str] = &["70/30", "80/20", "75/25", "60/40", "85/15"];
pub(crate) const FOLDS: &[&str] = &["3", "5", "10"];
pub(crate) const GRIDS: &[&str] = &["four", "five", "six", "eight"];
pub(crate) const SEED_VALUES: &[&str] = &["7", "13", "21", "42", "99", "123", "2024"];
pub(crate) const REPEATS: &[&str] = &["3", "5", "10"];
pub(crate) const NOISE: &[&str] = &["5", "10", "15", "20"];
pub(crate) const MAX_LINES: &[&str] = &["20", "25", "30", "40"];
pub(crate) const SUBSETS: &[&str] = &["25", "40", "50", "60", "75"];
pub(crate) const MEMORY: &[&str] = &["16", "32", "64", "128"];
pub(crate) const DEGREES: &[&str] = &["2", "3"];
pub(crate) const SIGMAS: &[&str] = &["0.05", "0.1", "0.2", "0.5"];
pub(crate) const N_FEATURES: &[&str] = &["3", "5", "8", "10"];
pub(crate) const BUDGETS: &[&str] = &["10", "15", "30", "60"];

/// Requirement clauses per tier.
pub(crate) fn requirement_count(d: Difficulty) -> usize {
    match d {
        Difficulty::Easy => 2,
        Difficulty::Medium => 3,
        Difficulty::Hard => 4,
    }
}

/// Lowercase, alphanumeric tokens joined by single spaces.
pub(crate) fn normalize_phrase(s: &str) -> String {
    crate::textsim::tokenize(s).join(" ")
}

/// Topic whose alias appears as a contiguous token sequence in `keyword`;
/// the longest matching alias wins.
pub(crate) fn match_topic(keyword: &str) -> Option<&'static Topic> {
    let norm = format!(" {} ", normalize_phrase(keyword));
    let mut best: Option<(&'static Topic, usize)> = None;
    for topic in TOPICS {
        for alias in topic.aliases {
            if norm.contains(&format!(" {alias} ")) && best.is_none_or(|(_, len)| alias.len() > len) {
                best = Some((topic, alias.len()));
            }
        }
    }
    best.map(|(t, _)| t)
}
