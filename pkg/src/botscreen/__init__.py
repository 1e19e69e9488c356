"""botscreen: cohort bot-screening toolkit.

Ingests user/tweet archives, extracts timeline and profile features (including
LDA topic mixtures and external bot-likelihood scores), rebalances training
data with SMOTE, trains a from-scratch exponential-loss gradient-boosting
classifier, and evaluates three screening systems with per-class
precision/recall/F1, macro averages, and Cohen's kappa.
"""
from .corpus import (ClassProfile, Cohort, Label, SplitSpec, SyntheticConfig,
                     Tweet, UserRecord, generate_synthetic,
                     generate_synthetic_scores, load_tweets, load_users,
                     stratified_partition, stratified_split)
from .errors import BotscreenError, DataError, ProviderError
from .features import (FeatureMatrix, FeatureSchema, StandardizationStats,
                       apply_standardization, assemble_features,
                       botometer_only_schema, build_feature_matrix,
                       class_distributions, fit_standardization, full_schema,
                       read_features_csv, write_features_csv)
from .botometer import (BotometerScore, ProviderConfig, Threshold,
                        calibrate_threshold, fetch_scores, read_scores_file,
                        threshold_classify)
from .sampling import SmoteConfig, SmoteResult, smote_rebalance
from .gbm import (GbmConfig, GbmModel, RegressionTree, fit_gbm, fit_tree,
                  load_gbm, neg_gradient, predict_label, predict_margin,
                  predict_prob, save_gbm)
from .evaluation import (ClassMetrics, ConfusionMatrix, CvReport, KappaReport,
                         cohen_kappa, confusion, cross_validate, f1_from_pr,
                         metrics, stratified_folds)
from .topics import (LdaConfig, TopicModel, fit_lda, infer_theta, load_lda,
                     save_lda, select_recent, tokenize, user_topic_means)

__version__ = "0.1.0"
