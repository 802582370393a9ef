#pragma once

// Decoder backend that talks to an external process over line-delimited JSON
// (see docs/decoder_protocol.md). Mask prompts and decoded masks travel as
// TRDT tensor files in a working directory.

#include <chrono>
#include <filesystem>
#include <string>

#include "trident/refine.hpp"

namespace trident {

class SubprocessDecoder final : public DecoderBackend {
 public:
  /// Starts `command` via /bin/sh. Tensor files are exchanged under
  /// `work_dir` (a fresh temporary directory when empty).
  explicit SubprocessDecoder(std::string command, std::filesystem::path work_dir = {},
                             std::chrono::milliseconds timeout = std::chrono::seconds(300));
  ~SubprocessDecoder() override;

  SubprocessDecoder(const SubprocessDecoder&) = delete;
  SubprocessDecoder& operator=(const SubprocessDecoder&) = delete;

  std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) override;

  const std::filesystem::path& work_dir() const { return work_dir_; }

 private:
  void shutdown();

  std::string command_;
  std::filesystem::path work_dir_;
  bool owns_work_dir_ = false;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;  ///< partial line carried between reads
  std::uint64_t batch_ = 0;
};

/// Encodes one request line (without the trailing newline).
std::string encode_decode_request(const DecodeRequest& request, const std::filesystem::path& mask_ref);

}  // namespace trident
