# 受入テスト用パッケージ