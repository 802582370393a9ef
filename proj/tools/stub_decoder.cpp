// Mask decoder stub speaking the JSON-lines protocol on stdin/stdout. Each
// answer is the request's mask prompt scaled by --gain and clamped to [0, 1].

#include <poll.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "trident/errors.hpp"
#include "trident/interchange.hpp"

using nlohmann::json;

namespace {

struct Options {
  float gain = 1.0f;
  bool reverse = false;
  std::vector<std::string> fail_images;
  bool fail_all = false;
  long exit_after = -1;
};

std::string answer(const std::string& line, const Options& opt) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::exception& e) {
    return json{{"id", nullptr}, {"error", std::string("malformed request: ") + e.what()}}.dump();
  }
  const json id = req.value("id", json(nullptr));
  const std::string image = req.value("image_ref", std::string());
  if (opt.fail_all || std::find(opt.fail_images.begin(), opt.fail_images.end(), image) != opt.fail_images.end())
    return json{{"id", id}, {"error", "decoding disabled for image '" + image + "'"}}.dump();
  try {
    const std::string mask_ref = req.at("mask_ref").get<std::string>();
    const auto prompt = trident::to_matrix(trident::read_tensor(mask_ref, "mask prompt"));
    const trident::RowMatrix<float> mask = (opt.gain * prompt.array()).cwiseMax(0.0f).cwiseMin(1.0f).matrix();
    const std::string out = mask_ref + ".decoded.trdt";
    trident::write_tensor(trident::from_matrix(mask), out);
    return json{{"id", id}, {"mask_ref", out}}.dump();
  } catch (const std::exception& e) {
    return json{{"id", id}, {"error", e.what()}}.dump();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Protocol stub for the trident mask decoder"};
  Options opt;
  app.add_option("--gain", opt.gain, "Multiplier applied to the mask prompt");
  app.add_flag("--reverse", opt.reverse, "Answer each burst of requests in reverse order");
  app.add_option("--fail-image", opt.fail_images, "Answer requests for this image_ref with an error");
  app.add_flag("--fail-all", opt.fail_all, "Answer every request with an error");
  app.add_option("--exit-after", opt.exit_after, "Exit without answering after this many responses");
  CLI11_PARSE(app, argc, argv);

  std::string buffer;
  std::vector<std::string> burst;
  long answered = 0;
  bool eof = false;
  char chunk[4096];

  const auto flush = [&]() {
    if (opt.reverse) std::reverse(burst.begin(), burst.end());
    for (const auto& line : burst) {
      if (opt.exit_after >= 0 && answered >= opt.exit_after) std::exit(1);
      std::cout << answer(line, opt) << '\n';
      ++answered;
    }
    std::cout.flush();
    burst.clear();
  };

  while (!eof) {
    // Wait briefly for more input so bursts can be reordered; answer once idle.
    pollfd fd{STDIN_FILENO, POLLIN, 0};
    const int ready = ::poll(&fd, 1, burst.empty() ? -1 : 20);
    if (ready == 0) {
      flush();
      continue;
    }
    const ssize_t n = ::read(STDIN_FILENO, chunk, sizeof chunk);
    if (n <= 0) {
      eof = true;
    } else {
      buffer.append(chunk, static_cast<std::size_t>(n));
    }
    std::size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      if (pos > 0) burst.push_back(buffer.substr(0, pos));
      buffer.erase(0, pos + 1);
    }
    if (!opt.reverse) flush();
  }
  if (!buffer.empty()) burst.push_back(buffer);
  flush();
  return 0;
}
