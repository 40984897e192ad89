/*
 * Copyright 2025 Stanford University, NVIDIA Corporation
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Length-prefixed packing of message payloads

#ifndef TASKDUAL_SERIALIZE_H
#define TASKDUAL_SERIALIZE_H

#include "taskdual/common.h"

#include <cstring>
#include <type_traits>

namespace taskdual {

  class ByteWriter {
  public:
    template <typename T>
      requires std::is_trivially_copyable_v<T>
    ByteWriter &operator<<(const T &v)
    {
      const auto *p = reinterpret_cast<const std::byte *>(&v);
      buf_.insert(buf_.end(), p, p + sizeof(T));
      return *this;
    }

    ByteWriter &operator<<(ByteView bytes)
    {
      *this << static_cast<std::uint64_t>(bytes.size());
      buf_.insert(buf_.end(), bytes.begin(), bytes.end());
      return *this;
    }

    ByteWriter &operator<<(const Bytes &bytes) { return *this << ByteView(bytes); }

    template <typename T>
      requires std::is_trivially_copyable_v<T>
    ByteWriter &operator<<(const std::vector<T> &vec)
    {
      *this << static_cast<std::uint64_t>(vec.size());
      for(const T &v : vec)
        *this << v;
      return *this;
    }

    Bytes take() { return std::move(buf_); }

  private:
    Bytes buf_;
  };

  class ByteReader {
  public:
    explicit ByteReader(ByteView bytes)
      : bytes_(bytes)
    {}

    template <typename T>
      requires std::is_trivially_copyable_v<T>
    ByteReader &operator>>(T &v)
    {
      need(sizeof(T));
      std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
      pos_ += sizeof(T);
      return *this;
    }

    ByteReader &operator>>(Bytes &out)
    {
      std::uint64_t n = 0;
      *this >> n;
      need(n);
      out.assign(bytes_.begin() + pos_, bytes_.begin() + pos_ + n);
      pos_ += n;
      return *this;
    }

    template <typename T>
      requires std::is_trivially_copyable_v<T>
    ByteReader &operator>>(std::vector<T> &vec)
    {
      std::uint64_t n = 0;
      *this >> n;
      vec.resize(n);
      for(T &v : vec)
        *this >> v;
      return *this;
    }

    bool done() const { return pos_ == bytes_.size(); }

  private:
    void need(std::size_t n) const
    {
      if(pos_ + n > bytes_.size())
        throw Error("truncated payload");
    }

    ByteView bytes_;
    std::size_t pos_ = 0;
  };

} // namespace taskdual

#endif
