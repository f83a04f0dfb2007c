#pragma once

#include <string>
#include <unordered_set>

namespace conceptdrive {

/// The standard 179-entry English stopword list (NLTK's), lowercase.
const std::unordered_set<std::string>& english_stopwords();

/// Stopwords used when matching explanations against scene descriptions:
/// the English list plus the prompt-template words ("a", "photo", "of").
const std::unordered_set<std::string>& explanation_stopwords();

}  // namespace conceptdrive
