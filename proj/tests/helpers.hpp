#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "convstruct/corpus.hpp"

namespace testing_support {

using convstruct::Index;

// A conversation whose utterance k has id "u<k>", author "a<k % 3>", one
// minute between messages and text "text <k>".
inline convstruct::LabeledConversation make_item(
    const std::vector<std::vector<Index>>& parents,
    convstruct::Mode mode = convstruct::Mode::kRedditTree,
    const std::string& conv_id = "conv") {
  convstruct::LabeledConversation item;
  item.conversation.conv_id = conv_id;
  item.conversation.mode = mode;
  for (Index k = 0; k < parents.size(); ++k) {
    convstruct::Utterance u;
    u.id = "u" + std::to_string(k);
    u.index = k;
    u.author = "a" + std::to_string(k % 3);
    u.timestamp = static_cast<std::int64_t>(60 * k);
    u.text = "text " + std::to_string(k);
    item.conversation.utterances.push_back(u);
  }
  item.graph = convstruct::ReplyGraph(parents);
  return item;
}

inline std::vector<std::vector<Index>> chain(std::size_t n) {
  std::vector<std::vector<Index>> p(n);
  for (Index i = 1; i < n; ++i) p[i] = {i - 1};
  return p;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("convstruct_test_" + name + "_" +
              std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
